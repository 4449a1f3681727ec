#pragma once

#include "sier/model.hpp"
#include "sier/simulate.hpp"
#include "sier/tuning.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace sier::io {

inline constexpr int kModelSchemaVersion = 1;

struct CsvTable {
    std::vector<std::string> header; // empty when the file had none
    Matrix values;
};

/// Comma-delimited numbers with an optional header row. The first row is a
/// header when any of its fields is not a number. Errors carry line/column.
CsvTable parse_csv(const std::string& text, const std::string& source = "<memory>");
CsvTable read_csv(const std::filesystem::path& path);

/// 17 significant digits, so the text reads back to the same double.
std::string format_double(double v);

std::string csv_text(const Matrix& m, const std::vector<std::string>& header = {});

/// Writes `contents` to a sibling temporary file, then renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

void write_csv(const std::filesystem::path& path, const Matrix& m,
               const std::vector<std::string>& header = {});

std::string model_to_json(const FittedModel& model);
FittedModel model_from_json(const std::string& text);
void save_model(const std::filesystem::path& path, const FittedModel& model);
FittedModel load_model(const std::filesystem::path& path);

/// Long format with header kind,pair,tau,lambda,k,fold,value. Row kinds:
/// folds, cap (per pair), error (per pair, k, fold), mean (per pair, k),
/// assign (fold of each observation) and one final chosen row.
std::string cv_report_csv(const CvReport& report);
CvReport parse_cv_report(const std::string& text);
CvReport read_cv_report(const std::filesystem::path& path);

/// Replicate rows, then mean and sd rows flagged agg=true.
std::string study_csv(const StudyResult& study);

std::string curve_csv(const ApproxCurve& curve);

/// Lines "tau,lambda"; optional header; '#' starts a comment.
TuningGrid read_grid(const std::filesystem::path& path, double threshold);

} // namespace sier::io
