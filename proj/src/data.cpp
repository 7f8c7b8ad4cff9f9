#include "ulab/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "ulab/kernels.hpp"
#include "ulab/rng.hpp"

namespace ulab {

std::vector<Example> Dataset::examples() const {
  std::vector<Example> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) out.push_back({features.row(i), labels[i], ids[i]});
  return out;
}

std::vector<Example> Dataset::examples(std::span<const std::int64_t> wanted) const {
  std::unordered_map<std::int64_t, std::size_t> row_of;
  row_of.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) row_of.emplace(ids[i], i);
  std::vector<Example> out;
  out.reserve(wanted.size());
  for (auto id : wanted) {
    auto it = row_of.find(id);
    if (it == row_of.end()) throw std::invalid_argument("unknown example id " + std::to_string(id));
    out.push_back({features.row(it->second), labels[it->second], id});
  }
  return out;
}

Dataset Dataset::subset(std::span<const std::int64_t> wanted) const {
  const auto ex = examples(wanted);
  Dataset out;
  out.num_classes = num_classes;
  out.features = Matrix(ex.size(), dim());
  for (std::size_t i = 0; i < ex.size(); ++i) {
    std::copy(ex[i].x.begin(), ex[i].x.end(), out.features.row(i).begin());
    out.labels.push_back(ex[i].label);
    out.ids.push_back(ex[i].id);
  }
  return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> c(num_classes, 0);
  for (int y : labels) ++c[static_cast<std::size_t>(y)];
  return c;
}

Dataset gen_gaussian_blobs(std::size_t n_per_class, std::size_t num_classes, std::size_t dim, double spread,
                           std::uint64_t seed, std::int64_t first_id) {
  if (n_per_class < 1 || num_classes < 1 || dim < 1)
    throw std::invalid_argument("gen_gaussian_blobs: counts must be >= 1");
  if (!(spread > 0.0)) throw std::invalid_argument("gen_gaussian_blobs: spread must be > 0");

  constexpr double kRadius = 2.0;
  Dataset d;
  d.num_classes = num_classes;
  d.features = Matrix(n_per_class * num_classes, dim);
  Rng rng(derive_seed(seed, "blobs"));
  std::size_t row = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    // Vertices +e_0, +e_1, ..., -e_0, -e_1, ..., then the same at larger radius.
    const std::size_t axis = c % dim;
    const double sign = ((c / dim) % 2 == 0) ? 1.0 : -1.0;
    const double radius = kRadius * static_cast<double>(1 + c / (2 * dim));
    for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
      auto x = d.features.row(row);
      for (std::size_t k = 0; k < dim; ++k) x[k] = spread * rng.normal();
      x[axis] += sign * radius;
      d.labels.push_back(static_cast<int>(c));
      d.ids.push_back(first_id + static_cast<std::int64_t>(row));
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  s = s.substr(b, e - b);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return std::string(s);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') quoted = !quoted;
    if (ch == ',' && !quoted) {
      out.push_back(trim(field));
      field.clear();
    } else {
      field.push_back(ch);
    }
  }
  out.push_back(trim(field));
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (*b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e && std::isfinite(out);
}

} // namespace

Dataset load_csv(const std::string& path, const std::string& label_column,
                 const std::vector<std::string>& numeric_columns) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset: '" + path + "' has no header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  // Strip a UTF-8 byte-order mark.
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const auto header = split_line(line);
  auto column_index = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error("missing column '" + name + "' in '" + path + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t label_idx = column_index(label_column);
  std::vector<std::size_t> feature_idx;
  for (const auto& c : numeric_columns) feature_idx.push_back(column_index(c));
  if (feature_idx.empty()) throw std::runtime_error("load_csv: no numeric columns requested");

  std::vector<double> values;
  std::vector<int> labels;
  std::map<std::string, int> label_map;
  std::size_t row = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("row " + std::to_string(row) + " (line " + std::to_string(line_no) + "): expected " +
                               std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()));
    for (std::size_t k = 0; k < feature_idx.size(); ++k) {
      double v = 0.0;
      const auto& cell = fields[feature_idx[k]];
      if (!parse_double(cell, v))
        throw std::runtime_error("row " + std::to_string(row) + " (line " + std::to_string(line_no) +
                                 "): cannot parse '" + cell + "' in numeric column '" + numeric_columns[k] + "'");
      values.push_back(v);
    }
    const auto& lab = fields[label_idx];
    auto it = label_map.find(lab);
    if (it == label_map.end()) it = label_map.emplace(lab, static_cast<int>(label_map.size())).first;
    labels.push_back(it->second);
  }
  if (labels.empty()) throw std::runtime_error("empty dataset: '" + path + "' has a header but no rows");

  Dataset d;
  d.num_classes = label_map.size();
  d.features = Matrix(labels.size(), feature_idx.size());
  d.features.data = std::move(values);
  d.labels = std::move(labels);
  d.ids.resize(d.labels.size());
  std::iota(d.ids.begin(), d.ids.end(), std::int64_t{0});
  return d;
}

void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  for (std::size_t k = 0; k < data.dim(); ++k) out << 'f' << k << ',';
  out << "label,id\n";
  char buf[64];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.features.row(i)) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
      out.write(buf, p - buf);
      out << ',';
    }
    out << data.labels[i] << ',' << data.ids[i] << '\n';
  }
}

// ---------------------------------------------------------------------------
// Splits

std::string_view to_string(DeletionStrategy s) {
  switch (s) {
  case DeletionStrategy::random: return "random";
  case DeletionStrategy::class_specific: return "class_specific";
  case DeletionStrategy::high_loss: return "high_loss";
  case DeletionStrategy::low_margin: return "low_margin";
  case DeletionStrategy::high_grad_norm: return "high_grad_norm";
  case DeletionStrategy::influence: return "influence";
  }
  return "?";
}

DeletionStrategy parse_strategy(std::string_view name) {
  for (auto s : {DeletionStrategy::random, DeletionStrategy::class_specific, DeletionStrategy::high_loss,
                 DeletionStrategy::low_margin, DeletionStrategy::high_grad_norm, DeletionStrategy::influence})
    if (to_string(s) == name) return s;
  throw std::invalid_argument("unknown deletion strategy '" + std::string(name) + "'");
}

bool is_ranking_strategy(DeletionStrategy s) {
  return s != DeletionStrategy::random && s != DeletionStrategy::class_specific;
}

std::size_t forget_count(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 0.5));
}

namespace {

ForgetSplit make_split(const Dataset& data, std::vector<std::int64_t> forget, DeletionStrategy strategy, double ratio,
                       std::uint64_t seed) {
  ForgetSplit s;
  s.strategy = strategy;
  s.ratio = ratio;
  s.seed = seed;
  std::sort(forget.begin(), forget.end());
  s.forget_ids = std::move(forget);
  for (auto id : data.ids)
    if (!std::binary_search(s.forget_ids.begin(), s.forget_ids.end(), id)) s.retain_ids.push_back(id);
  std::sort(s.retain_ids.begin(), s.retain_ids.end());
  return s;
}

} // namespace

ForgetSplit split_random(const Dataset& data, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split_random: ratio must be in (0,1)");
  const std::size_t k = forget_count(ratio, data.size());
  if (k < 1) throw std::invalid_argument("split_random: ratio too small, forget set would be empty");
  Rng rng(derive_seed(seed, "split_random"));
  const auto perm = rng.permutation(data.size());
  std::vector<std::int64_t> forget;
  for (std::size_t i = 0; i < k; ++i) forget.push_back(data.ids[perm[i]]);
  return make_split(data, std::move(forget), DeletionStrategy::random, ratio, seed);
}

ForgetSplit split_class(const Dataset& data, int target_class, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("split_class: ratio must be in (0,1]");
  std::vector<std::int64_t> members;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.labels[i] == target_class) members.push_back(data.ids[i]);
  if (members.empty()) throw std::invalid_argument("split_class: class " + std::to_string(target_class) + " is absent");
  std::vector<std::int64_t> forget;
  if (ratio >= 1.0) {
    forget = members;
  } else {
    const std::size_t k = forget_count(ratio, members.size());
    if (k < 1) throw std::invalid_argument("split_class: ratio too small, forget set would be empty");
    Rng rng(derive_seed(seed, "split_class"));
    rng.shuffle(members);
    forget.assign(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(k));
  }
  auto s = make_split(data, std::move(forget), DeletionStrategy::class_specific, ratio, seed);
  s.target_class = target_class;
  return s;
}

double top2_margin(std::span<const double> probs) {
  double p1 = -1.0, p2 = -1.0;
  for (double p : probs) {
    if (p > p1) {
      p2 = p1;
      p1 = p;
    } else if (p > p2) {
      p2 = p;
    }
  }
  return probs.size() < 2 ? p1 : p1 - p2;
}

RankingScores ranking_scores(const Dataset& data, const ModelParams& params0, DeletionStrategy rule,
                             std::uint64_t seed) {
  if (!is_ranking_strategy(rule))
    throw std::invalid_argument("ranking rule must be one of high_loss, low_margin, high_grad_norm, influence");
  const auto ex = data.examples();
  for (const auto& e : ex) check_example(params0.spec, e);
  RankingScores r;
  r.rule = rule;
  r.tie_break_seed = seed;
  r.scores.resize(ex.size());
  switch (rule) {
  case DeletionStrategy::high_loss: {
    const Matrix p = kernels::predict(params0, ex);
    for (std::size_t i = 0; i < ex.size(); ++i)
      r.scores[i] = -std::log(std::max(p(i, static_cast<std::size_t>(ex[i].label)), kProbFloor));
    break;
  }
  case DeletionStrategy::low_margin: {
    const Matrix p = kernels::predict(params0, ex);
    for (std::size_t i = 0; i < ex.size(); ++i) r.scores[i] = top2_margin(p.row(i));
    break;
  }
  case DeletionStrategy::high_grad_norm:
    kernels::grad_norms(params0, ex, r.scores);
    break;
  case DeletionStrategy::influence: {
    // Exact mean training gradient over the whole dataset.
    std::vector<double> gbar(params0.size());
    kernels::grad_sum(params0, ex, gbar);
    const double inv = 1.0 / static_cast<double>(ex.size());
    for (double& v : gbar) v *= inv;
    kernels::grad_dots(params0, ex, gbar, r.scores);
    break;
  }
  default: break;
  }
  return r;
}

std::vector<std::size_t> select_top(std::span<const double> priority, std::size_t k, std::uint64_t seed) {
  if (k > priority.size()) throw std::invalid_argument("select_top: k exceeds the number of scores");
  Rng rng(derive_seed(seed, "tie_break"));
  const auto tiebreak = rng.permutation(priority.size());
  std::vector<std::size_t> idx(priority.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (priority[a] != priority[b]) return priority[a] > priority[b];
    return tiebreak[a] < tiebreak[b];
  });
  idx.resize(k);
  return idx;
}

ForgetSplit rank_and_split(const Dataset& data, const ModelParams& params0, DeletionStrategy rule, double ratio,
                           std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("rank_and_split: ratio must be in (0,1)");
  const std::size_t k = forget_count(ratio, data.size());
  if (k < 1) throw std::invalid_argument("rank_and_split: ratio too small, forget set would be empty");
  const auto r = ranking_scores(data, params0, rule, seed);
  for (double s : r.scores)
    if (!std::isfinite(s)) throw std::invalid_argument("rank_and_split: non-finite ranking score");
  std::vector<double> priority = r.scores;
  if (rule == DeletionStrategy::low_margin)
    for (double& p : priority) p = -p;
  std::vector<std::int64_t> forget;
  for (auto i : select_top(priority, k, seed)) forget.push_back(data.ids[i]);
  return make_split(data, std::move(forget), rule, ratio, seed);
}

} // namespace ulab
