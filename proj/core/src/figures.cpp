#include "interconnect/figures.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace interconnect {

std::size_t CsvTable::column(std::string_view name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ContractError("CSV has no column '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - header.begin());
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

double parse_number(const std::string& cell) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ContractError("CSV cell '" + cell + "' is not a number");
  }
}

constexpr double kWidth = 640, kHeight = 360, kMargin = 48;

std::string svg_open(std::string_view title) {
  return fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n"
      "  <title>{}</title>\n"
      "  <rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n"
      "  <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
      kWidth, kHeight, kWidth, kHeight, xml_escape(title), kWidth, kHeight, kWidth / 2, xml_escape(title));
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + " is empty");
  table.header = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != table.header.size()) throw IoError(path.string() + ": ragged row '" + line + "'");
    table.rows.push_back(std::move(cells));
  }
  return table;
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::string text;
  auto append_row = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) text += ',';
      text += row[i];
    }
    text += '\n';
  };
  append_row(table.header);
  for (const auto& row : table.rows) append_row(row);
  write_text(path, text);
}

std::string format_number(double v) { return fmt::format("{}", v); }

void write_weights_csv(const std::filesystem::path& path, const WeightReport& report) {
  CsvTable t{{"layer", "raw_weight", "normalized_weight"}, {}};
  for (std::size_t i = 0; i < report.raw.size(); ++i) {
    t.rows.push_back({std::to_string(i + 1), format_number(report.raw[i]), format_number(report.normalized.at(i))});
  }
  write_csv(path, t);
}

void write_diff_csv(const std::filesystem::path& path, std::span<const double> multi, std::span<const double> bi) {
  const auto diff = weight_diff(multi, bi);
  CsvTable t{{"layer", "w_multi", "w_bi", "abs_diff"}, {}};
  for (std::size_t i = 0; i < diff.size(); ++i) {
    t.rows.push_back({std::to_string(i + 1), format_number(multi[i]), format_number(bi[i]), format_number(diff[i])});
  }
  write_csv(path, t);
}

void write_params_csv(const std::filesystem::path& path, const ParamCountReport& report) {
  CsvTable t{{"component", "total"}, {}};
  for (auto s : kAllFreezeStrategies) {
    t.header.push_back(std::string("trainable_") + to_string(s));
    t.header.push_back(std::string("frozen_") + to_string(s));
  }
  auto row = [&](const ComponentCount& c) {
    std::vector<std::string> cells{c.component, std::to_string(c.total)};
    for (const auto& s : c.strategies) {
      cells.push_back(std::to_string(s.trainable));
      cells.push_back(std::to_string(s.frozen));
    }
    t.rows.push_back(std::move(cells));
  };
  for (const auto& c : report.components) row(c);
  row(report.totals);
  write_csv(path, t);
}

void write_bleu_csv(const std::filesystem::path& path, std::span<const BleuRow> rows) {
  CsvTable t{{"direction", "bleu", "n_sentences"}, {}};
  for (const auto& r : rows) t.rows.push_back({r.direction, format_number(r.bleu), std::to_string(r.n_sentences)});
  write_csv(path, t);
}

void write_param_bleu_csv(const std::filesystem::path& path, std::span<const ParamBleuPoint> points) {
  CsvTable t{{"label", "params", "bleu"}, {}};
  for (const auto& p : points) t.rows.push_back({p.label, std::to_string(p.params), format_number(p.bleu)});
  write_csv(path, t);
}

std::string bar_chart_svg(const CsvTable& table, std::string_view label_column, std::string_view value_column,
                          std::string_view title) {
  const std::size_t lc = table.column(label_column), vc = table.column(value_column);
  std::vector<double> values;
  for (const auto& r : table.rows) values.push_back(parse_number(r[vc]));
  double hi = 0.0, lo = 0.0;
  for (double v : values) {
    hi = std::max(hi, v);
    lo = std::min(lo, v);
  }
  if (hi == lo) hi = lo + 1.0;
  const double plot_h = kHeight - 2 * kMargin;
  const double plot_w = kWidth - 2 * kMargin;
  auto y_of = [&](double v) { return kMargin + (hi - v) / (hi - lo) * plot_h; };
  const double zero_y = y_of(0.0);
  std::string svg = svg_open(title);
  svg += fmt::format("  <line x1=\"{}\" y1=\"{:.3f}\" x2=\"{}\" y2=\"{:.3f}\" stroke=\"black\"/>\n", kMargin, zero_y,
                     kWidth - kMargin, zero_y);
  const double slot = values.empty() ? plot_w : plot_w / static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = kMargin + slot * static_cast<double>(i) + slot * 0.1;
    const double y = std::min(y_of(values[i]), zero_y);
    const double h = std::abs(y_of(values[i]) - zero_y);
    svg += fmt::format(
        "  <rect class=\"bar\" x=\"{:.3f}\" y=\"{:.3f}\" width=\"{:.3f}\" height=\"{:.3f}\" fill=\"#4477aa\">"
        "<title>{}: {}</title></rect>\n",
        x, y, slot * 0.8, h, xml_escape(table.rows[i][lc]), xml_escape(table.rows[i][vc]));
    svg += fmt::format(
        "  <text x=\"{:.3f}\" y=\"{:.3f}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
        x + slot * 0.4, kHeight - kMargin + 14, xml_escape(table.rows[i][lc]));
  }
  svg += fmt::format(
      "  <text x=\"12\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" transform=\"rotate(-90 12 {})\">{}</text>\n",
      kHeight / 2, kHeight / 2, xml_escape(value_column));
  svg += "</svg>\n";
  return svg;
}

std::string scatter_svg(const CsvTable& table, std::string_view x_column, std::string_view y_column,
                        std::string_view label_column, std::string_view title) {
  const std::size_t xc = table.column(x_column), yc = table.column(y_column), lc = table.column(label_column);
  std::vector<double> xs, ys;
  for (const auto& r : table.rows) {
    xs.push_back(parse_number(r[xc]));
    ys.push_back(parse_number(r[yc]));
  }
  auto range = [](const std::vector<double>& v) {
    if (v.empty()) return std::pair{0.0, 1.0};
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    double a = *lo, b = *hi;
    if (a == b) {
      a -= 1.0;
      b += 1.0;
    }
    const double pad = (b - a) * 0.1;
    return std::pair{a - pad, b + pad};
  };
  const auto [x0, x1] = range(xs);
  const auto [y0, y1] = range(ys);
  std::string svg = svg_open(title);
  svg += fmt::format("  <rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", kMargin,
                     kMargin, kWidth - 2 * kMargin, kHeight - 2 * kMargin);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double px = kMargin + (xs[i] - x0) / (x1 - x0) * (kWidth - 2 * kMargin);
    const double py = kHeight - kMargin - (ys[i] - y0) / (y1 - y0) * (kHeight - 2 * kMargin);
    svg += fmt::format("  <circle class=\"point\" cx=\"{:.3f}\" cy=\"{:.3f}\" r=\"4\" fill=\"#cc6677\"/>\n", px, py);
    svg += fmt::format("  <text x=\"{:.3f}\" y=\"{:.3f}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
                       px + 6, py - 6, xml_escape(table.rows[i][lc]));
  }
  svg += fmt::format("  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
                     kWidth / 2, kHeight - 12, xml_escape(x_column));
  svg += "</svg>\n";
  return svg;
}

namespace {

std::string file_label(const std::string& label) {
  std::string out;
  for (char c : label) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out.empty() ? "model" : out;
}

}  // namespace

FigureOutputs emit_figures(const FigureInputs& inputs, const std::filesystem::path& out_dir) {
  if (inputs.weights.empty() && !inputs.params && inputs.param_bleu.empty()) {
    throw ContractError("emit_figures: no reports to emit");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  FigureOutputs out;
  auto csv_then_svg = [&](const std::string& stem, auto&& write, auto&& render) {
    const auto csv = out_dir / (stem + ".csv");
    const auto svg = out_dir / (stem + ".svg");
    write(csv);
    write_text(svg, render(read_csv(csv)));
    out.files.push_back(csv);
    out.files.push_back(svg);
  };

  for (const auto& w : inputs.weights) {
    csv_then_svg(
        "weights_" + file_label(w.label), [&](const auto& p) { write_weights_csv(p, w); },
        [&](const CsvTable& t) { return bar_chart_svg(t, "layer", "normalized_weight", "Layer weights: " + w.label); });
  }
  if (inputs.weights.size() > 1) {
    const auto& ref = inputs.weights.front();
    CsvTable cos{{"label", "reference", "cosine_raw", "cosine_normalized"}, {}};
    for (std::size_t i = 1; i < inputs.weights.size(); ++i) {
      const auto& w = inputs.weights[i];
      csv_then_svg(
          "diff_" + file_label(w.label), [&](const auto& p) { write_diff_csv(p, ref.normalized, w.normalized); },
          [&](const CsvTable& t) {
            return bar_chart_svg(t, "layer", "abs_diff", "Difference from " + ref.label + ": " + w.label);
          });
      const double c = cosine_similarity(ref.raw, w.raw);
      out.cosine.push_back(c);
      cos.rows.push_back(
          {w.label, ref.label, format_number(c), format_number(cosine_similarity(ref.normalized, w.normalized))});
    }
    write_csv(out_dir / "cosine.csv", cos);
    out.files.push_back(out_dir / "cosine.csv");
  }
  if (inputs.params) {
    csv_then_svg(
        "params", [&](const auto& p) { write_params_csv(p, *inputs.params); },
        [&](const CsvTable& t) {
          CsvTable parts = t;
          parts.rows.pop_back();  // the total row would dwarf every component
          return bar_chart_svg(parts, "component", "total", "Parameters per component");
        });
  }
  if (!inputs.param_bleu.empty()) {
    csv_then_svg(
        "param_bleu", [&](const auto& p) { write_param_bleu_csv(p, inputs.param_bleu); },
        [&](const CsvTable& t) { return scatter_svg(t, "params", "bleu", "label", "Parameter size vs BLEU"); });
  }
  return out;
}

}  // namespace interconnect
