// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rdit/bench.hpp"
#include "rdit/error.hpp"

namespace rdit {

namespace fs = std::filesystem;

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string label(const EvalReport& r) { return r.variant == "main" ? r.method : r.method + " " + r.variant; }

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::kIo, "cannot write " + path.string());
  os << text;
  if (!os) fail(ErrorKind::kIo, "short write on " + path.string());
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2"};

}  // namespace

void write_report_csv(const fs::path& path, const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << "method,variant,budget,category,score\n";
  for (const auto& r : reports) {
    for (const auto& s : r.curve) {
      for (Category c : kAllCategories) {
        os << r.method << ',' << r.variant << ',' << s.budget << ',' << category_name(c) << ','
           << fmt("%.6f", s.category[static_cast<std::size_t>(c)]) << '\n';
      }
      os << r.method << ',' << r.variant << ',' << s.budget << ",overall," << fmt("%.6f", s.overall) << '\n';
    }
  }
  write_file(path, os.str());
}

std::string render_svg(const std::vector<EvalReport>& reports, const std::string& title) {
  const double W = 640, H = 400, left = 60, right = 170, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  int bmin = 1 << 30, bmax = 0;
  for (const auto& r : reports) {
    for (const auto& s : r.curve) {
      bmin = std::min(bmin, s.budget);
      bmax = std::max(bmax, s.budget);
    }
  }
  if (bmax < bmin) bmin = bmax = 1;
  const double span = bmax > bmin ? bmax - bmin : 1;
  auto x_of = [&](int b) { return left + pw * (b - bmin) / span; };
  auto y_of = [&](double v) { return top + ph * (1.0 - std::clamp(v, 0.0, 1.0)); };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
     << "</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    const std::string y = fmt("%.1f", y_of(v));
    os << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + pw << "\" y2=\"" << y
       << "\" stroke=\"#dddddd\"/>\n";
    os << "<text x=\"" << left - 8 << "\" y=\"" << y << "\" text-anchor=\"end\" dominant-baseline=\"middle\">"
       << fmt("%.1f", v) << "</text>\n";
  }
  std::vector<int> budgets;
  for (const auto& r : reports) {
    for (const auto& s : r.curve) budgets.push_back(s.budget);
  }
  std::sort(budgets.begin(), budgets.end());
  budgets.erase(std::unique(budgets.begin(), budgets.end()), budgets.end());
  for (int b : budgets) {
    os << "<text x=\"" << fmt("%.1f", x_of(b)) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << b
       << "</text>\n";
  }
  os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">samples per prompt</text>\n";
  os << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << top + ph / 2 << ")\">overall score</text>\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    const char* color = kPalette[i % std::size(kPalette)];
    std::string pts;
    for (const auto& s : r.curve) {
      if (!pts.empty()) pts += ' ';
      pts += fmt("%.1f", x_of(s.budget)) + "," + fmt("%.1f", y_of(s.overall));
    }
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << pts << "\"/>\n";
    for (const auto& s : r.curve) {
      os << "<circle cx=\"" << fmt("%.1f", x_of(s.budget)) << "\" cy=\"" << fmt("%.1f", y_of(s.overall))
         << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    const double ly = top + 10 + 18.0 * static_cast<double>(i);
    os << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 32 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly << "\" dominant-baseline=\"middle\">"
       << xml_escape(label(r)) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string trend_table(const std::vector<EvalReport>& reports) {
  std::vector<int> budgets;
  for (const auto& r : reports) {
    for (const auto& s : r.curve) budgets.push_back(s.budget);
  }
  std::sort(budgets.begin(), budgets.end());
  budgets.erase(std::unique(budgets.begin(), budgets.end()), budgets.end());
  std::ostringstream os;
  os << "| variant |";
  for (int b : budgets) os << ' ' << b << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < budgets.size(); ++i) os << "---|";
  os << '\n';
  for (const auto& r : reports) {
    os << "| " << label(r) << " |";
    for (int b : budgets) {
      auto it = std::find_if(r.curve.begin(), r.curve.end(), [&](const BudgetScore& s) { return s.budget == b; });
      os << ' ' << (it == r.curve.end() ? std::string("-") : fmt("%.3f", it->overall)) << " |";
    }
    os << '\n';
  }
  return os.str();
}

void emit_report(const std::vector<EvalReport>& reports, const fs::path& dir, const std::string& name,
                 const std::string& title) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
  write_report_csv(dir / (name + ".csv"), reports);
  write_file(dir / (name + ".svg"), render_svg(reports, title));
  write_file(dir / (name + ".md"), trend_table(reports));
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(report_to_json(r));
  write_file(dir / (name + ".json"), arr.dump(1) + "\n");
}

}  // namespace rdit
