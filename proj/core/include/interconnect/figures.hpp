#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "interconnect/analysis.hpp"

namespace interconnect {

// Every figure is written as a CSV with exact values first; the SVG is then
// rendered from that CSV, so each plotted number can be audited.

struct BleuRow {
  std::string direction;
  double bleu = 0.0;
  std::size_t n_sentences = 0;
};

struct ParamBleuPoint {
  std::string label;
  std::size_t params = 0;
  double bleu = 0.0;
};

// Minimal CSV table: header plus rows of raw cell strings.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

// Shortest decimal that parses back to the same double.
std::string format_number(double v);

// layer,raw_weight,normalized_weight (layers numbered from 1)
void write_weights_csv(const std::filesystem::path& path, const WeightReport& report);
// layer,w_multi,w_bi,abs_diff
void write_diff_csv(const std::filesystem::path& path, std::span<const double> multi, std::span<const double> bi);
// component,total,trainable_<strategy>,frozen_<strategy>,...
void write_params_csv(const std::filesystem::path& path, const ParamCountReport& report);
// direction,bleu,n_sentences
void write_bleu_csv(const std::filesystem::path& path, std::span<const BleuRow> rows);
// label,params,bleu
void write_param_bleu_csv(const std::filesystem::path& path, std::span<const ParamBleuPoint> points);

// Bar chart of one numeric column, one bar per row, labelled by `label_column`.
std::string bar_chart_svg(const CsvTable& table, std::string_view label_column, std::string_view value_column,
                          std::string_view title);
// Scatter of two numeric columns.
std::string scatter_svg(const CsvTable& table, std::string_view x_column, std::string_view y_column,
                        std::string_view label_column, std::string_view title);

void write_text(const std::filesystem::path& path, std::string_view text);

struct FigureInputs {
  std::vector<WeightReport> weights;  // first entry is the multilingual reference when diffs are emitted
  std::optional<ParamCountReport> params;
  std::vector<ParamBleuPoint> param_bleu;
};

struct FigureOutputs {
  std::vector<std::filesystem::path> files;
  std::vector<double> cosine;  // per weights[1..] against weights[0]
};

// weights_<label>.csv/.svg for every report; diff_<label>.csv/.svg and
// cosine.csv when more than one report is given; params.csv/.svg;
// param_bleu.csv/.svg. ContractError when there is nothing to emit, IoError
// when the directory cannot be written.
FigureOutputs emit_figures(const FigureInputs& inputs, const std::filesystem::path& out_dir);

}  // namespace interconnect
