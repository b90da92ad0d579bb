#include "nfbst/report.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace nfbst {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ReportError("cannot write " + path.string());
  return out;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ReportError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw ReportError(path.string() + ": empty file");
  return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ReportError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ReportError(path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  auto out = open_out(path);
  out << j.dump(2) << "\n";
  if (!out) throw ReportError("write failed for " + path.string());
}

std::string f(double v) { return format_double(v); }

double number(const std::string& cell, const fs::path& path, std::size_t line) {
  try {
    return parse_double(cell);
  } catch (const std::invalid_argument&) {
    throw ReportError(path.string() + ":" + std::to_string(line + 1) + ": not a number: '" + cell + "'");
  }
}

// nlohmann writes doubles with round-trip precision; NaN and infinities
// become strings so the file stays valid JSON.
json real(double v) {
  if (std::isfinite(v)) return v;
  return f(v);
}

double from_real(const json& j) { return j.is_string() ? parse_double(j.get<std::string>()) : j.get<double>(); }

json seeds_json(const StageSeeds& s) {
  return {{"data", s.data}, {"train", s.train}, {"sampling", s.sampling},
          {"lime", s.lime}, {"bootstrap", s.bootstrap}, {"lrt", s.lrt}};
}

std::string qgs_column(StatisticKind kind, double lambda) { return "nfbst_" + to_string(kind) + "_qgs_" + f(lambda); }

}  // namespace

std::string sanitize_name(const std::string& name) {
  std::string out;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                    c == '-' || c == '.';
    out += ok ? c : '_';
  }
  return out.empty() ? "_" : out;
}

void write_report(const EvidenceReport& report, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ReportError("cannot create " + dir.string() + ": " + ec.message());
  const Index d = static_cast<Index>(report.feature_names.size());

  {
    auto out = open_out(dir / "global.csv");
    out << "feature";
    for (const auto& s : report.statistics)
      for (double l : report.lambdas) out << "," << qgs_column(s.kind, l);
    if (report.global_evidence) out << ",nfbst_sqgrad_global_ev";
    for (const auto& b : report.baselines) {
      const auto k = to_string(b.kind);
      out << "," << k << "_stat," << k << "_p," << k << "_df";
    }
    out << "\n";
    for (Index j = 0; j < d; ++j) {
      out << report.feature_names[static_cast<std::size_t>(j)];
      for (const auto& s : report.statistics)
        for (Index l = 0; l < s.qgs.cols(); ++l) out << "," << f(s.qgs(j, l));
      if (report.global_evidence) out << "," << f((*report.global_evidence)(j));
      for (const auto& b : report.baselines) {
        const auto& t = b.tests[static_cast<std::size_t>(j)];
        out << "," << f(t.statistic) << "," << f(t.p_value) << "," << f(t.df);
      }
      out << "\n";
    }
    if (!out) throw ReportError("write failed for " + (dir / "global.csv").string());
  }

  {
    auto out = open_out(dir / "instance_evidence.csv");
    out << "row,feature,statistic,evidence\n";
    for (const auto& s : report.statistics) {
      const auto k = to_string(s.kind);
      for (Index r = 0; r < s.evidence.rows(); ++r)
        for (Index j = 0; j < d; ++j) {
          out << r << "," << report.feature_names[static_cast<std::size_t>(j)] << "," << k << "," << f(s.evidence(r, j))
              << "\n";
        }
    }
    if (!out) throw ReportError("write failed for " + (dir / "instance_evidence.csv").string());
  }

  {
    auto out = open_out(dir / "local_evidence.csv");
    out << "feature,interval_lo,interval_hi,count,evidence\n";
    for (const auto& le : report.local) {
      out << report.feature_names[static_cast<std::size_t>(le.feature)] << "," << f(le.lo) << "," << f(le.hi) << ","
          << le.count << "," << f(le.evidence) << "\n";
    }
  }

  {
    auto out = open_out(dir / "point_scores.csv");
    out << "row,feature,posterior_mean_grad,mean_network_grad\n";
    for (Index r = 0; r < report.point_scores.rows(); ++r)
      for (Index j = 0; j < d; ++j) {
        out << r << "," << report.feature_names[static_cast<std::size_t>(j)] << "," << f(report.point_scores(r, j))
            << "," << f(report.mean_network_scores(r, j)) << "\n";
      }
  }

  if (!report.hist_edges.empty()) {
    const Index bins = static_cast<Index>(report.hist_edges.size()) - 1;
    for (Index j = 0; j < d; ++j) {
      const auto& name = report.feature_names[static_cast<std::size_t>(j)];
      auto out = open_out(dir / ("histogram_" + sanitize_name(name) + ".csv"));
      out << "statistic,interval_lo,interval_hi,evidence_lo,evidence_hi,count\n";
      for (const auto& s : report.statistics) {
        if (s.histogram.empty()) continue;
        const auto& h = s.histogram[static_cast<std::size_t>(j)];
        for (Index b = 0; b < bins; ++b)
          for (Index e = 0; e < kEvidenceBins; ++e) {
            out << to_string(s.kind) << "," << f(report.hist_edges[static_cast<std::size_t>(b)]) << ","
                << f(report.hist_edges[static_cast<std::size_t>(b + 1)]) << ","
                << f(static_cast<double>(e) / kEvidenceBins) << "," << f(static_cast<double>(e + 1) / kEvidenceBins)
                << "," << h(b, e) << "\n";
          }
      }
    }
  }

  if (report.metrics) write_metrics(*report.metrics, dir / "metrics.json");

  json run;
  json cfg = json::object();
  for (const auto& [k, v] : report.config) cfg[k] = v;
  run["config"] = cfg;
  run["config_hash"] = report.config_hash;
  run["master_seed"] = report.master_seed;
  run["seeds"] = seeds_json(report.seeds);
  run["features"] = report.feature_names;
  run["rows"] = report.rows;
  json lambdas = json::array();
  for (double l : report.lambdas) lambdas.push_back(real(l));
  run["lambdas"] = lambdas;
  json edges = json::array();
  for (double e : report.hist_edges) edges.push_back(real(e));
  run["hist_edges"] = edges;
  json stats = json::array();
  for (const auto& s : report.statistics) stats.push_back({{"name", to_string(s.kind)}, {"rows", s.evidence.rows()}});
  run["statistics"] = stats;
  json base = json::array();
  for (const auto& b : report.baselines) base.push_back(to_string(b.kind));
  run["baselines"] = base;
  run["global_evidence"] = report.global_evidence.has_value();
  write_json(run, dir / "run.json");

  json timing = json::object();
  for (const auto& [k, v] : report.durations) timing[k] = v;
  write_json(timing, dir / "timing.json");
}

void write_metrics(const MetricsReport& metrics, const fs::path& path) {
  json j;
  json g = json::array();
  for (const auto& m : metrics.global) {
    std::vector<int> decisions;
    for (bool b : m.significant) decisions.push_back(b ? 1 : 0);
    g.push_back({{"method", m.method},
                 {"significant", decisions},
                 {"precision", real(m.scores.precision)},
                 {"recall", real(m.scores.recall)},
                 {"f1", real(m.scores.f1)},
                 {"undefined", m.scores.undefined},
                 {"tp", m.scores.counts.tp},
                 {"fp", m.scores.counts.fp},
                 {"tn", m.scores.counts.tn},
                 {"fn", m.scores.counts.fn}});
  }
  j["global"] = g;
  json inst = json::array();
  for (const auto& m : metrics.instance) {
    inst.push_back({{"method", m.method},
                    {"eps", real(m.eps)},
                    {"auc", m.auc ? real(*m.auc) : json(nullptr)},
                    {"positives", m.positives},
                    {"cells", m.cells}});
  }
  j["instance"] = inst;
  write_json(j, path);
}

MetricsReport read_metrics(const fs::path& path) {
  const json j = read_json(path);
  MetricsReport m;
  try {
    for (const auto& g : j.at("global")) {
      GlobalScores s;
      s.method = g.at("method").get<std::string>();
      for (int v : g.at("significant").get<std::vector<int>>()) s.significant.push_back(v != 0);
      s.scores.precision = from_real(g.at("precision"));
      s.scores.recall = from_real(g.at("recall"));
      s.scores.f1 = from_real(g.at("f1"));
      s.scores.undefined = g.at("undefined").get<bool>();
      s.scores.counts = {g.at("tp").get<std::int64_t>(), g.at("fp").get<std::int64_t>(),
                         g.at("tn").get<std::int64_t>(), g.at("fn").get<std::int64_t>()};
      m.global.push_back(s);
    }
    for (const auto& i : j.at("instance")) {
      InstanceScores s;
      s.method = i.at("method").get<std::string>();
      s.eps = from_real(i.at("eps"));
      if (!i.at("auc").is_null()) s.auc = from_real(i.at("auc"));
      s.positives = i.at("positives").get<Index>();
      s.cells = i.at("cells").get<Index>();
      m.instance.push_back(s);
    }
  } catch (const json::exception& e) {
    throw ReportError(path.string() + ": " + e.what());
  }
  return m;
}

EvidenceReport read_report(const fs::path& dir) {
  EvidenceReport rep;
  const json run = read_json(dir / "run.json");
  std::vector<std::pair<std::string, Index>> stat_rows;
  bool has_global = false;
  std::vector<BaselineKind> baseline_kinds;
  try {
    for (auto it = run.at("config").begin(); it != run.at("config").end(); ++it) {
      rep.config.emplace_back(it.key(), it.value().get<std::string>());
    }
    rep.config_hash = run.at("config_hash").get<std::string>();
    rep.master_seed = run.at("master_seed").get<std::uint64_t>();
    const auto& s = run.at("seeds");
    rep.seeds = {s.at("data").get<std::uint64_t>(),     s.at("train").get<std::uint64_t>(),
                 s.at("sampling").get<std::uint64_t>(), s.at("lime").get<std::uint64_t>(),
                 s.at("bootstrap").get<std::uint64_t>(), s.at("lrt").get<std::uint64_t>()};
    rep.feature_names = run.at("features").get<std::vector<std::string>>();
    rep.rows = run.at("rows").get<Index>();
    for (const auto& l : run.at("lambdas")) rep.lambdas.push_back(from_real(l));
    for (const auto& e : run.at("hist_edges")) rep.hist_edges.push_back(from_real(e));
    for (const auto& st : run.at("statistics")) stat_rows.emplace_back(st.at("name").get<std::string>(), st.at("rows").get<Index>());
    for (const auto& b : run.at("baselines")) baseline_kinds.push_back(baseline_from_string(b.get<std::string>()));
    has_global = run.at("global_evidence").get<bool>();
  } catch (const json::exception& e) {
    throw ReportError((dir / "run.json").string() + ": " + e.what());
  }

  const Index d = static_cast<Index>(rep.feature_names.size());
  std::map<std::string, Index> feature_index;
  for (Index j = 0; j < d; ++j) feature_index[rep.feature_names[static_cast<std::size_t>(j)]] = j;
  auto feature_of = [&](const std::string& name, const fs::path& p) {
    auto it = feature_index.find(name);
    if (it == feature_index.end()) throw ReportError(p.string() + ": unknown feature '" + name + "'");
    return it->second;
  };
  const Index L = static_cast<Index>(rep.lambdas.size());

  for (const auto& [name, rows] : stat_rows) {
    StatisticReport s;
    s.kind = statistic_from_string(name);
    s.evidence = Eigen::MatrixXd::Constant(rows, d, std::numeric_limits<double>::quiet_NaN());
    s.qgs.resize(d, L);
    rep.statistics.push_back(std::move(s));
  }
  for (BaselineKind k : baseline_kinds) rep.baselines.push_back({k, std::vector<TestResult>(static_cast<std::size_t>(d))});

  {
    const fs::path p = dir / "global.csv";
    const auto lines = read_lines(p);
    const auto header = split_csv(lines[0]);
    std::map<std::string, std::size_t> col;
    for (std::size_t c = 0; c < header.size(); ++c) col[header[c]] = c;
    auto at = [&](const std::vector<std::string>& cells, const std::string& name, std::size_t line) {
      auto it = col.find(name);
      if (it == col.end() || it->second >= cells.size()) throw ReportError(p.string() + ": missing column " + name);
      return number(cells[it->second], p, line);
    };
    if (has_global) rep.global_evidence = Eigen::VectorXd(d);
    for (std::size_t line = 1; line < lines.size(); ++line) {
      const auto cells = split_csv(lines[line]);
      const Index j = feature_of(cells.at(0), p);
      for (auto& s : rep.statistics)
        for (Index l = 0; l < L; ++l) s.qgs(j, l) = at(cells, qgs_column(s.kind, rep.lambdas[static_cast<std::size_t>(l)]), line);
      if (has_global) (*rep.global_evidence)(j) = at(cells, "nfbst_sqgrad_global_ev", line);
      for (auto& b : rep.baselines) {
        const auto k = to_string(b.kind);
        auto& t = b.tests[static_cast<std::size_t>(j)];
        t.method = b.kind;
        t.feature_index = j;
        t.statistic = at(cells, k + "_stat", line);
        t.p_value = at(cells, k + "_p", line);
        t.df = at(cells, k + "_df", line);
      }
    }
  }

  {
    const fs::path p = dir / "instance_evidence.csv";
    const auto lines = read_lines(p);
    for (std::size_t line = 1; line < lines.size(); ++line) {
      const auto cells = split_csv(lines[line]);
      if (cells.size() != 4) throw ReportError(p.string() + ":" + std::to_string(line + 1) + ": expected 4 fields");
      const auto r = static_cast<Index>(number(cells[0], p, line));
      const Index j = feature_of(cells[1], p);
      const StatisticKind kind = statistic_from_string(cells[2]);
      auto it = std::find_if(rep.statistics.begin(), rep.statistics.end(), [&](const auto& s) { return s.kind == kind; });
      if (it == rep.statistics.end() || r < 0 || r >= it->evidence.rows()) {
        throw ReportError(p.string() + ":" + std::to_string(line + 1) + ": row or statistic not in run.json");
      }
      it->evidence(r, j) = number(cells[3], p, line);
    }
  }

  {
    const fs::path p = dir / "local_evidence.csv";
    const auto lines = read_lines(p);
    for (std::size_t line = 1; line < lines.size(); ++line) {
      const auto cells = split_csv(lines[line]);
      if (cells.size() != 5) throw ReportError(p.string() + ":" + std::to_string(line + 1) + ": expected 5 fields");
      LocalEvidence le;
      le.feature = feature_of(cells[0], p);
      le.lo = number(cells[1], p, line);
      le.hi = number(cells[2], p, line);
      le.count = static_cast<Index>(number(cells[3], p, line));
      le.evidence = number(cells[4], p, line);
      rep.local.push_back(le);
    }
  }

  {
    const fs::path p = dir / "point_scores.csv";
    const auto lines = read_lines(p);
    Index rows = 0;
    std::vector<std::tuple<Index, Index, double, double>> cells_read;
    for (std::size_t line = 1; line < lines.size(); ++line) {
      const auto cells = split_csv(lines[line]);
      if (cells.size() != 4) throw ReportError(p.string() + ":" + std::to_string(line + 1) + ": expected 4 fields");
      const auto r = static_cast<Index>(number(cells[0], p, line));
      cells_read.emplace_back(r, feature_of(cells[1], p), number(cells[2], p, line), number(cells[3], p, line));
      rows = std::max(rows, r + 1);
    }
    rep.point_scores = Eigen::MatrixXd::Zero(rows, d);
    rep.mean_network_scores = Eigen::MatrixXd::Zero(rows, d);
    for (const auto& [r, j, v, w] : cells_read) {
      rep.point_scores(r, j) = v;
      rep.mean_network_scores(r, j) = w;
    }
  }

  if (!rep.hist_edges.empty()) {
    const Index bins = static_cast<Index>(rep.hist_edges.size()) - 1;
    for (auto& s : rep.statistics) s.histogram.assign(static_cast<std::size_t>(d), Eigen::MatrixXi::Zero(bins, kEvidenceBins));
    for (Index j = 0; j < d; ++j) {
      const fs::path p = dir / ("histogram_" + sanitize_name(rep.feature_names[static_cast<std::size_t>(j)]) + ".csv");
      const auto lines = read_lines(p);
      for (std::size_t line = 1; line < lines.size(); ++line) {
        const auto cells = split_csv(lines[line]);
        if (cells.size() != 6) throw ReportError(p.string() + ":" + std::to_string(line + 1) + ": expected 6 fields");
        const StatisticKind kind = statistic_from_string(cells[0]);
        auto it = std::find_if(rep.statistics.begin(), rep.statistics.end(), [&](const auto& s) { return s.kind == kind; });
        if (it == rep.statistics.end()) throw ReportError(p.string() + ": statistic not in run.json");
        const double lo = number(cells[1], p, line);
        const double ev_lo = number(cells[3], p, line);
        const auto b = static_cast<Index>(std::find(rep.hist_edges.begin(), rep.hist_edges.end(), lo) - rep.hist_edges.begin());
        const auto e = static_cast<Index>(std::lround(ev_lo * kEvidenceBins));
        if (b >= bins || e < 0 || e >= kEvidenceBins) throw ReportError(p.string() + ": bin out of range");
        it->histogram[static_cast<std::size_t>(j)](b, e) = static_cast<int>(number(cells[5], p, line));
      }
    }
  }

  for (const auto& s : rep.statistics) {
    if (s.evidence.hasNaN()) throw ReportError((dir / "instance_evidence.csv").string() + ": missing cells");
  }
  return rep;
}

void save_truth(const LoadedData& loaded, const fs::path& path) {
  if (!loaded.truth) throw ReportError("no ground truth for this data source");
  json j;
  j["provenance"] = to_string(loaded.data.provenance);
  std::vector<int> sig;
  for (bool b : loaded.truth->significant) sig.push_back(b ? 1 : 0);
  j["significant"] = sig;
  if (loaded.teacher) {
    const auto& t = *loaded.teacher;
    j["teacher"] = {{"input_dim", t.arch.input_dim},
                    {"hidden", t.arch.hidden_widths},
                    {"activation", to_string(t.arch.activation)},
                    {"significant_count", t.significant_count},
                    {"noise_sigma", t.noise_sigma},
                    {"params", std::vector<double>(t.params.data(), t.params.data() + t.params.size())}};
  }
  write_json(j, path);
}

GroundTruth load_truth(const fs::path& path, const Dataset& data) {
  const json j = read_json(path);
  try {
    const std::string prov = j.at("provenance").get<std::string>();
    if (prov == "toy") {
      if (data.dims() != kToyDims) throw ReportError(path.string() + ": toy truth needs 8 features");
      return toy_truth(data);
    }
    if (prov == "teacher") {
      const auto& t = j.at("teacher");
      TeacherSpec spec;
      spec.arch = Architecture{t.at("input_dim").get<Index>(), t.at("hidden").get<std::vector<Index>>(),
                               activation_from_string(t.at("activation").get<std::string>())};
      spec.significant_count = t.at("significant_count").get<Index>();
      spec.noise_sigma = t.at("noise_sigma").get<double>();
      const auto params = t.at("params").get<std::vector<double>>();
      spec.params = Eigen::Map<const Eigen::VectorXd>(params.data(), static_cast<Index>(params.size()));
      check_parameters(spec.arch, spec.params);
      if (data.dims() != spec.arch.input_dim) {
        throw DimensionError("load_truth: feature count", spec.arch.input_dim, data.dims());
      }
      return teacher_truth(spec, data);
    }
    throw ReportError(path.string() + ": unsupported provenance '" + prov + "'");
  } catch (const json::exception& e) {
    throw ReportError(path.string() + ": " + e.what());
  }
}

}  // namespace nfbst
