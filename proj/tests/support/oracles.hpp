#pragma once

// Brute-force reference implementations used to freeze expected values.
// Nothing here calls into the code paths it checks.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace cxsim::oracle {

// Sessions as lists of event labels; the sentinels are the literal strings
// "<start>" and "<end>".
using LabelSessions = std::vector<std::vector<std::string>>;
using EdgeTable = std::map<std::pair<std::string, std::string>, double>;

EdgeTable smoothed_edges(const LabelSessions& sessions, double alpha);

std::vector<double> hash_embedding(const std::string& text, int dim);

double rmse(const std::vector<double>& pred, const std::vector<double>& truth);
double smape(const std::vector<double>& pred, const std::vector<double>& truth);
double f1(const std::vector<double>& scores, const std::vector<int>& labels, double threshold);
// All positive/negative pairs, ties count one half.
std::optional<double> roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);
// Average precision over distinct score thresholds, evaluated from scratch at
// every cut.
std::optional<double> pr_auc(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace cxsim::oracle
