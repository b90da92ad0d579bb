#include "nfbst/datagen.hpp"

#include "nfbst/random.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace nfbst {

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::toy:
      return "toy";
    case Provenance::teacher:
      return "teacher";
    case Provenance::csv:
      return "csv";
  }
  return "unknown";
}

void Dataset::validate() const {
  if (features.rows() < 1 || features.cols() < 1) {
    throw std::invalid_argument("dataset: needs at least one row and one feature");
  }
  if (target.size() != features.rows()) {
    throw DimensionError("dataset: target length", features.rows(), target.size());
  }
  if (static_cast<Index>(column_names.size()) != features.cols()) {
    throw DimensionError("dataset: column name count", features.cols(), static_cast<Index>(column_names.size()));
  }
  if (features.hasNaN() || target.hasNaN()) {
    throw std::invalid_argument("dataset: NaN values present");
  }
}

Dataset Dataset::subset(const std::vector<Index>& indices) const {
  Dataset out;
  out.features.resize(static_cast<Index>(indices.size()), dims());
  out.target.resize(static_cast<Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    out.features.row(static_cast<Index>(k)) = features.row(indices[k]);
    out.target(static_cast<Index>(k)) = target(indices[k]);
  }
  out.column_names = column_names;
  out.provenance = provenance;
  return out;
}

namespace {

std::vector<std::string> default_names(Index d) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(d));
  for (Index j = 0; j < d; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

}  // namespace

double toy_response(const Eigen::Ref<const Eigen::VectorXd>& x) {
  return 8.0 + x(0) * x(0) + x(1) * x(2) + std::cos(x(3)) + std::exp(x(4) * x(5)) + 0.1 * x(6) + 0.0 * x(7);
}

Eigen::VectorXd toy_gradient(const Eigen::Ref<const Eigen::VectorXd>& x) {
  Eigen::VectorXd g(kToyDims);
  const double e45 = std::exp(x(4) * x(5));
  g << 2.0 * x(0), x(2), x(1), -std::sin(x(3)), x(5) * e45, x(4) * e45, 0.1, 0.0;
  return g;
}

Dataset gen_toy(Index n, std::uint64_t seed, double noise_sigma) {
  if (n < 1) throw std::invalid_argument("gen_toy: n must be positive");
  Rng rng(seed);
  Dataset data;
  data.features = uniform_matrix(n, kToyDims, -1.0, 1.0, rng);
  std::normal_distribution<double> noise(0.0, noise_sigma);
  data.target.resize(n);
  for (Index i = 0; i < n; ++i) {
    data.target(i) = toy_response(data.features.row(i).transpose()) + noise(rng);
  }
  data.column_names = default_names(kToyDims);
  data.provenance = Provenance::toy;
  return data;
}

double TeacherSpec::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return forward<double>(arch, params, Eigen::VectorXd(x));
}

std::pair<Dataset, TeacherSpec> gen_teacher(Index n, Index d, Index significant_count,
                                            const std::vector<Index>& hidden_widths, double noise_sigma,
                                            std::uint64_t seed) {
  if (significant_count < 0 || significant_count > d) {
    throw std::invalid_argument("gen_teacher: significant_count must lie in [0, d]");
  }
  if (n < 1) throw std::invalid_argument("gen_teacher: n must be positive");
  TeacherSpec teacher;
  teacher.arch = Architecture{d, hidden_widths, Activation::relu};
  teacher.arch.validate();
  teacher.significant_count = significant_count;
  teacher.noise_sigma = noise_sigma;

  Rng rng(seed);
  teacher.params.resize(teacher.arch.parameter_count());
  for (Index l = 0; l < teacher.arch.layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(teacher.arch.fan_in(l)));
    std::uniform_real_distribution<double> init(-bound, bound);
    const Index begin = teacher.arch.weight_offset(l);
    const Index end = teacher.arch.weight_offset(l + 1);
    for (Index k = begin; k < end; ++k) teacher.params(k) = init(rng);
  }
  auto first = layer_weights(teacher.arch, teacher.params, 0);
  first.rightCols(d - significant_count).setZero();

  Dataset data;
  data.features = uniform_matrix(n, d, -1.0, 1.0, rng);
  Eigen::VectorXd clean = forward_batch<double>(teacher.arch, teacher.params, data.features);

  if (n > 1) {
    const double stddev = std::sqrt((clean.array() - clean.mean()).square().sum() / static_cast<double>(n - 1));
    if (stddev > 0.0 && (stddev < 0.5 || stddev > 5.0)) {
      const Index last = teacher.arch.layer_count() - 1;
      layer_weights(teacher.arch, teacher.params, last) /= stddev;
      layer_bias(teacher.arch, teacher.params, last) /= stddev;
      clean = forward_batch<double>(teacher.arch, teacher.params, data.features);
    }
  }

  std::normal_distribution<double> noise(0.0, noise_sigma);
  data.target.resize(n);
  for (Index i = 0; i < n; ++i) data.target(i) = clean(i) + noise(rng);
  data.column_names = default_names(d);
  data.provenance = Provenance::teacher;
  return {std::move(data), std::move(teacher)};
}

GroundTruthLabels label_from_gradients(const Eigen::MatrixXd& gradients, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("labeling: eps must be positive");
  GroundTruthLabels labels;
  labels.eps = eps;
  labels.instance_labels = gradients.array().abs() >= eps;
  return labels;
}

GroundTruthLabels label_instance_significance(const TeacherSpec& teacher, const Dataset& data, double eps) {
  return label_from_gradients(input_gradient_batch<double>(teacher.arch, teacher.params, data.features), eps);
}

std::string format_double(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

double parse_double(std::string_view field) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
    field.remove_suffix(1);
  }
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double value = 0.0;
  const auto result = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || result.ec != std::errc() || result.ptr != field.data() + field.size()) {
    throw std::invalid_argument("not a number: '" + std::string(field) + "'");
  }
  return value;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  std::istringstream in(line);
  while (std::getline(in, current, ',')) fields.push_back(current);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  for (auto& f : fields) {
    while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.pop_back();
    while (!f.empty() && f.front() == ' ') f.erase(f.begin());
  }
  return fields;
}

}  // namespace

Dataset ingest_csv(const std::filesystem::path& path, const std::string& target_column) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line) || split_line(line).empty()) {
    throw CsvError(path.string() + ": empty file (header row required)");
  }
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const std::vector<std::string> header = split_line(line);

  Index target_index = -1;
  std::vector<std::string> names;
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k] == target_column) {
      target_index = static_cast<Index>(k);
    } else {
      names.push_back(header[k]);
    }
  }
  if (target_index < 0) {
    throw CsvError(path.string() + ": target column '" + target_column + "' not in header");
  }
  if (names.empty()) throw CsvError(path.string() + ": no feature columns");

  std::vector<double> values;
  std::vector<double> targets;
  Index row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != header.size()) {
      throw CsvError(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                     " fields, expected " + std::to_string(header.size()));
    }
    for (std::size_t k = 0; k < fields.size(); ++k) {
      double v = 0.0;
      try {
        v = parse_double(fields[k]);
      } catch (const std::invalid_argument&) {
        throw CsvError(path.string() + ": row " + std::to_string(row) + ", column '" + header[k] +
                       "': non-numeric cell '" + fields[k] + "'");
      }
      if (std::isnan(v)) {
        throw CsvError(path.string() + ": row " + std::to_string(row) + ", column '" + header[k] + "': NaN");
      }
      if (static_cast<Index>(k) == target_index) {
        targets.push_back(v);
      } else {
        values.push_back(v);
      }
    }
  }
  if (targets.empty()) throw CsvError(path.string() + ": no data rows (empty dataset)");

  Dataset data;
  const Index n = static_cast<Index>(targets.size());
  const Index d = static_cast<Index>(names.size());
  data.features = Eigen::Map<const RowMajorMatrix<double>>(values.data(), n, d);
  data.target = Eigen::Map<const Eigen::VectorXd>(targets.data(), n);
  data.column_names = std::move(names);
  data.provenance = Provenance::csv;
  return data;
}

void write_csv(const Dataset& data, const std::filesystem::path& path, const std::string& target_name) {
  std::ofstream out(path);
  if (!out) throw CsvError("cannot write '" + path.string() + "'");
  for (const auto& name : data.column_names) out << name << ',';
  out << target_name << '\n';
  for (Index i = 0; i < data.rows(); ++i) {
    for (Index j = 0; j < data.dims(); ++j) out << format_double(data.features(i, j)) << ',';
    out << format_double(data.target(i)) << '\n';
  }
  if (!out) throw CsvError("write failed for '" + path.string() + "'");
}

}  // namespace nfbst
