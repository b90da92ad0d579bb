#include "nfbst/pipeline.hpp"

#include "nfbst/evidence.hpp"
#include "nfbst/random.hpp"
#include "nfbst/report.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>

namespace nfbst {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Runs body(chunk) for chunk in [0, count) on up to `workers` threads.
// Each chunk writes only its own slot, so results do not depend on the
// worker count.
template <typename Body>
void parallel_chunks(Index count, Index workers, Body body) {
  const Index w = std::clamp<Index>(workers, 1, std::max<Index>(count, 1));
  if (w == 1) {
    for (Index c = 0; c < count; ++c) body(c);
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(w));
  std::vector<std::thread> pool;
  for (Index t = 0; t < w; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (Index c = next++; c < count; c = next++) body(c);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
        next = count;
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

struct TeacherPreset {
  Index n;
  Index d;
  Index k;
  std::vector<Index> widths;
};

TeacherPreset teacher_preset(const ExperimentConfig& c) {
  const bool paper = c.scale == "paper";
  TeacherPreset p{paper ? 10000 : 2000, paper ? 100 : 20, 0, {20, 20, 20}};
  if (c.source != DataSource::dataset1) p.widths = {16, 16, 16};
  if (c.source == DataSource::dataset3) p.n /= 10;
  if (c.rows) p.n = *c.rows;
  if (c.dims) p.d = *c.dims;
  p.k = c.significant ? *c.significant : p.d / 2;
  if (p.k > p.d) throw std::invalid_argument("significant exceeds dims");
  return p;
}

bool wants(const ExperimentConfig& c, StatisticKind k) {
  return std::find(c.stats.begin(), c.stats.end(), k) != c.stats.end();
}

bool wants(const ExperimentConfig& c, BaselineKind k) {
  return std::find(c.baselines.begin(), c.baselines.end(), k) != c.baselines.end();
}

// Evidence for every (row, feature) of m x n sample blocks.
void fill_evidence(const std::vector<Eigen::MatrixXd>& samples, Eigen::MatrixXd& out, Index row0) {
  for (std::size_t j = 0; j < samples.size(); ++j) {
    const auto& s = samples[j];
    for (Index r = 0; r < s.cols(); ++r) out(row0 + r, static_cast<Index>(j)) = evidence(s.col(r)).ev;
  }
}

Eigen::MatrixXd qgs_table(const Eigen::MatrixXd& evidence_matrix, const std::vector<double>& lambdas) {
  Eigen::MatrixXd q(evidence_matrix.cols(), static_cast<Index>(lambdas.size()));
  for (Index j = 0; j < evidence_matrix.cols(); ++j)
    for (std::size_t l = 0; l < lambdas.size(); ++l) q(j, static_cast<Index>(l)) = qgs(evidence_matrix.col(j), lambdas[l]);
  return q;
}

constexpr Index kChunkRows = 256;
constexpr Index kLimeChunkRows = 4;

}  // namespace

StageSeeds stage_seeds(std::uint64_t master) {
  return {stage_seed(master, SeedStream::data),     stage_seed(master, SeedStream::train),
          stage_seed(master, SeedStream::sampling), stage_seed(master, SeedStream::lime),
          stage_seed(master, SeedStream::bootstrap), stage_seed(master, SeedStream::lrt)};
}

GroundTruth toy_truth(const Dataset& data) {
  GroundTruth t;
  t.significant = std::vector<bool>(kToyDims, true);
  t.significant[7] = false;
  t.gradients.resize(data.rows(), data.dims());
  for (Index i = 0; i < data.rows(); ++i) t.gradients.row(i) = toy_gradient(data.features.row(i).transpose()).transpose();
  return t;
}

GroundTruth teacher_truth(const TeacherSpec& teacher, const Dataset& data) {
  GroundTruth t;
  const Index d = teacher.arch.input_dim;
  t.significant.resize(static_cast<std::size_t>(d));
  for (Index j = 0; j < d; ++j) t.significant[static_cast<std::size_t>(j)] = j < teacher.significant_count;
  t.gradients = input_gradient_batch<double>(teacher.arch, teacher.params, data.features);
  return t;
}

LoadedData load_data(const ExperimentConfig& config) {
  return stage("data", [&] {
    const StageSeeds seeds = stage_seeds(config.seed);
    LoadedData out;
    switch (config.source) {
      case DataSource::toy: {
        out.data = gen_toy(config.rows.value_or(10000), seeds.data, config.noise_sigma.value_or(1.0));
        out.truth = toy_truth(out.data);
        break;
      }
      case DataSource::dataset1:
      case DataSource::dataset2:
      case DataSource::dataset3: {
        const TeacherPreset p = teacher_preset(config);
        auto [data, teacher] = gen_teacher(p.n, p.d, p.k, p.widths, config.noise_sigma.value_or(0.1), seeds.data);
        out.data = std::move(data);
        out.truth = teacher_truth(teacher, out.data);
        out.teacher = std::move(teacher);
        break;
      }
      case DataSource::csv:
        out.data = ingest_csv(config.csv_path, config.target_column);
        break;
    }
    return out;
  });
}

PosteriorArtifact train_stage(const ExperimentConfig& config, const Dataset& data) {
  return stage("train", [&] {
    PosteriorArtifact a;
    a.arch = Architecture{data.dims(), config.hidden_widths(), config.activation};
    a.prior = config.prior;
    a.config = config.train;
    a.config.seed = stage_seeds(config.seed).train;
    a.column_names = data.column_names;
    a.posterior = train(data, a.arch, a.prior, a.config).posterior;
    return a;
  });
}

std::vector<double> histogram_edges(Index bins, double bound) {
  if (bins < 1 || !(bound > 0.0)) throw std::invalid_argument("histogram_edges: need bins >= 1 and bound > 0");
  std::vector<double> e(static_cast<std::size_t>(bins + 1));
  for (Index b = 0; b <= bins; ++b) e[static_cast<std::size_t>(b)] = bound * static_cast<double>(b) / static_cast<double>(bins);
  return e;
}

Index interval_of(const std::vector<double>& edges, double x) {
  const double a = std::abs(x);
  const auto bins = static_cast<Index>(edges.size()) - 1;
  // first edge strictly above |x|, so each interval is [lo, hi)
  const auto it = std::upper_bound(edges.begin(), edges.end(), a);
  const Index b = static_cast<Index>(it - edges.begin()) - 1;
  return std::clamp<Index>(b, 0, bins - 1);
}

std::vector<Eigen::MatrixXi> evidence_histogram(const Eigen::MatrixXd& evidence, const Eigen::MatrixXd& features,
                                                const std::vector<double>& edges, Index evidence_bins) {
  const Index bins = static_cast<Index>(edges.size()) - 1;
  std::vector<Eigen::MatrixXi> out(static_cast<std::size_t>(evidence.cols()), Eigen::MatrixXi::Zero(bins, evidence_bins));
  for (Index j = 0; j < evidence.cols(); ++j)
    for (Index r = 0; r < evidence.rows(); ++r) {
      const Index b = interval_of(edges, features(r, j));
      const auto e = std::min<Index>(static_cast<Index>(evidence(r, j) * static_cast<double>(evidence_bins)), evidence_bins - 1);
      ++out[static_cast<std::size_t>(j)](b, e);
    }
  return out;
}

const StatisticReport* EvidenceReport::find(StatisticKind kind) const {
  for (const auto& s : statistics)
    if (s.kind == kind) return &s;
  return nullptr;
}

EvidenceReport test_stage(const ExperimentConfig& config, const LoadedData& loaded,
                          const PosteriorArtifact& artifact) {
  const Dataset& data = loaded.data;
  const Architecture& arch = artifact.arch;
  if (data.dims() != arch.input_dim) {
    throw StageError("test", "posterior expects " + std::to_string(arch.input_dim) + " features, data has " +
                                 std::to_string(data.dims()));
  }
  const StageSeeds seeds = stage_seeds(config.seed);
  const Index n = data.rows();
  const Index d = data.dims();

  EvidenceReport report;
  report.feature_names = data.column_names;
  report.rows = n;
  report.lambdas = config.lambdas;
  report.config = config_pairs(config);
  report.config_hash = config_hash(config);
  report.master_seed = config.seed;
  report.seeds = seeds;
  const double bound = config.hist_bound.value_or(
      data.provenance == Provenance::csv ? std::max(data.features.cwiseAbs().maxCoeff(), 1e-12) : 1.0);
  report.hist_edges = histogram_edges(config.hist_bins, bound);

  auto t0 = Clock::now();
  const PosteriorDraws draws =
      stage("sample", [&] { return sample_parameters(artifact.posterior, config.draws, seeds.sampling); });
  const Index m = draws.count();
  report.durations["sample"] = seconds_since(t0);

  // gradient family: instance evidence plus squared-gradient sums
  const bool want_grad = wants(config, StatisticKind::grad_instance);
  const bool want_sq = wants(config, StatisticKind::sqgrad_global);
  if (want_grad || want_sq) {
    t0 = Clock::now();
    stage("evidence[grad]", [&] {
      const Index bins = config.hist_bins;
      const Index chunks = (n + kChunkRows - 1) / kChunkRows;
      StatisticReport grad{StatisticKind::grad_instance, Eigen::MatrixXd(want_grad ? n : 0, d), {}, {}};
      // per chunk: sum over its rows of g^2, per draw and feature (and bin)
      std::vector<Eigen::MatrixXd> sq_global(static_cast<std::size_t>(chunks));
      std::vector<std::vector<Eigen::MatrixXd>> sq_local(static_cast<std::size_t>(chunks));
      StatisticQuery settings;
      if (want_grad) {
        report.point_scores.resize(n, d);
        report.mean_network_scores =
            input_gradient_batch<double>(arch, artifact.posterior.mu, data.features).cwiseAbs();
      }
      parallel_chunks(chunks, config.workers, [&](Index c) {
        const Index r0 = c * kChunkRows;
        const Index len = std::min(kChunkRows, n - r0);
        const Eigen::MatrixXd rows = data.features.middleRows(r0, len);
        const auto samples = instance_statistic_samples(StatisticKind::grad_instance, draws, arch, rows, settings, r0);
        if (want_grad) {
          fill_evidence(samples, grad.evidence, r0);
          for (Index j = 0; j < d; ++j) {
            report.point_scores.block(r0, j, len, 1) =
                samples[static_cast<std::size_t>(j)].colwise().mean().transpose().cwiseAbs();
          }
        }
        if (want_sq) {
          auto& g = sq_global[static_cast<std::size_t>(c)];
          g = Eigen::MatrixXd::Zero(m, d);
          auto& l = sq_local[static_cast<std::size_t>(c)];
          l.assign(static_cast<std::size_t>(d), Eigen::MatrixXd::Zero(m, bins));
          for (Index j = 0; j < d; ++j) {
            const Eigen::MatrixXd sq = samples[static_cast<std::size_t>(j)].array().square();
            g.col(j) = sq.rowwise().sum();
            if (config.local) {
              for (Index r = 0; r < len; ++r) {
                const Index b = interval_of(report.hist_edges, data.features(r0 + r, j));
                l[static_cast<std::size_t>(j)].col(b) += sq.col(r);
              }
            }
          }
        }
      });
      if (want_grad) {
        grad.qgs = qgs_table(grad.evidence, config.lambdas);
        grad.histogram = evidence_histogram(grad.evidence, data.features, report.hist_edges);
        report.statistics.push_back(std::move(grad));
      }
      if (want_sq) {
        Eigen::MatrixXd total = Eigen::MatrixXd::Zero(m, d);
        for (const auto& g : sq_global) total += g;
        total /= static_cast<double>(n);
        Eigen::VectorXd ev(d);
        for (Index j = 0; j < d; ++j) ev(j) = evidence(total.col(j)).ev;
        report.global_evidence = ev;
        if (config.local) {
          for (Index j = 0; j < d; ++j) {
            Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(m, bins);
            for (const auto& l : sq_local) sums += l[static_cast<std::size_t>(j)];
            for (Index b = 0; b < bins; ++b) {
              LocalEvidence le;
              le.feature = j;
              le.lo = report.hist_edges[static_cast<std::size_t>(b)];
              le.hi = report.hist_edges[static_cast<std::size_t>(b + 1)];
              for (Index r = 0; r < n; ++r) le.count += interval_of(report.hist_edges, data.features(r, j)) == b;
              if (le.count == 0) continue;
              le.evidence = evidence(sums.col(b) / static_cast<double>(le.count)).ev;
              report.local.push_back(le);
            }
          }
        }
      }
      return 0;
    });
    report.durations["evidence_grad"] = seconds_since(t0);
  }

  for (StatisticKind kind : {StatisticKind::lrp, StatisticKind::deeplift, StatisticKind::lime}) {
    if (!wants(config, kind)) continue;
    t0 = Clock::now();
    const std::string name = to_string(kind);
    stage("evidence[" + name + "]", [&] {
      StatisticQuery settings;
      settings.kind = kind;
      settings.lrp_epsilon = config.lrp_epsilon;
      settings.reference = feature_means(data);
      settings.lime.seed = seeds.lime;
      settings.lime.num_perturbations = config.lime_perturbations;
      settings.lime.perturbation_sigma = default_lime_sigma(data);
      const Index scored = kind == StatisticKind::lime ? std::min(config.lime_instances, n) : n;
      const Index chunk = kind == StatisticKind::lime ? kLimeChunkRows : kChunkRows;
      const Index chunks = (scored + chunk - 1) / chunk;
      StatisticReport rep{kind, Eigen::MatrixXd(scored, d), {}, {}};
      parallel_chunks(chunks, config.workers, [&](Index c) {
        const Index r0 = c * chunk;
        const Index len = std::min(chunk, scored - r0);
        const Eigen::MatrixXd rows = data.features.middleRows(r0, len);
        fill_evidence(instance_statistic_samples(kind, draws, arch, rows, settings, r0), rep.evidence, r0);
      });
      rep.qgs = qgs_table(rep.evidence, config.lambdas);
      rep.histogram = evidence_histogram(rep.evidence, data.features, report.hist_edges);
      report.statistics.push_back(std::move(rep));
      return 0;
    });
    report.durations["evidence_" + name] = seconds_since(t0);
  }

  if (wants(config, BaselineKind::ttest)) {
    t0 = Clock::now();
    stage("baseline[ttest]", [&] {
      const LinearFit fit = ols_fit(data);
      BaselineReport b{BaselineKind::ttest, {}};
      for (Index j = 0; j < d; ++j) b.tests.push_back(ttest_linear(fit, j));
      report.baselines.push_back(std::move(b));
      return 0;
    });
    report.durations["baseline_ttest"] = seconds_since(t0);
  }
  if (wants(config, BaselineKind::bootstrap)) {
    t0 = Clock::now();
    stage("baseline[bootstrap]", [&] {
      BaselineReport b{BaselineKind::bootstrap, {}};
      for (auto& r : bootstrap_test_all(data, arch, config.baseline_fit, config.bootstrap_b, seeds.bootstrap,
                                        config.workers)) {
        b.tests.push_back(r.test);
      }
      report.baselines.push_back(std::move(b));
      return 0;
    });
    report.durations["baseline_bootstrap"] = seconds_since(t0);
  }
  if (wants(config, BaselineKind::lrt)) {
    t0 = Clock::now();
    stage("baseline[lrt]", [&] {
      FitConfig fit = config.baseline_fit;
      fit.seed = seeds.lrt;
      BaselineReport b{BaselineKind::lrt, {}};
      for (auto& r : likelihood_ratio_test_all(data, arch, fit)) b.tests.push_back(r.test);
      report.baselines.push_back(std::move(b));
      return 0;
    });
    report.durations["baseline_lrt"] = seconds_since(t0);
  }
  return report;
}

MetricsReport evaluate_stage(const ExperimentConfig& config, const EvidenceReport& report, const GroundTruth& truth) {
  return stage("evaluate", [&] {
    const Index d = static_cast<Index>(report.feature_names.size());
    if (static_cast<Index>(truth.significant.size()) != d) {
      throw DimensionError("evaluate: truth feature count", d, static_cast<Index>(truth.significant.size()));
    }
    MetricsReport out;
    auto add_global = [&](const std::string& method, std::vector<bool> decisions) {
      out.global.push_back({method, decisions, precision_recall_f1(truth.significant, decisions)});
    };
    for (const auto& s : report.statistics) {
      std::vector<bool> dec(static_cast<std::size_t>(d));
      for (Index j = 0; j < d; ++j) dec[static_cast<std::size_t>(j)] = !(s.qgs(j, 0) > config.decision_threshold);
      add_global("nfbst_" + to_string(s.kind), dec);
    }
    if (report.global_evidence) {
      std::vector<bool> dec(static_cast<std::size_t>(d));
      for (Index j = 0; j < d; ++j) {
        dec[static_cast<std::size_t>(j)] = !((*report.global_evidence)(j) > config.decision_threshold);
      }
      add_global("nfbst_sqgrad_global", dec);
    }
    for (const auto& b : report.baselines) {
      std::vector<bool> dec(static_cast<std::size_t>(d));
      for (Index j = 0; j < d; ++j) dec[static_cast<std::size_t>(j)] = b.tests[static_cast<std::size_t>(j)].p_value < config.alpha;
      add_global(to_string(b.kind), dec);
    }

    auto add_auc = [&](const std::string& method, double eps, const Eigen::MatrixXd& scores) {
      const Index rows = scores.rows();
      if (truth.gradients.rows() < rows) {
        throw DimensionError("evaluate: truth rows", rows, truth.gradients.rows());
      }
      std::vector<bool> labels;
      std::vector<double> s;
      labels.reserve(static_cast<std::size_t>(rows * d));
      s.reserve(static_cast<std::size_t>(rows * d));
      for (Index r = 0; r < rows; ++r) {
        for (Index j = 0; j < d; ++j) {
          labels.push_back(std::abs(truth.gradients(r, j)) >= eps);
          s.push_back(scores(r, j));
        }
      }
      InstanceScores is{method, eps, std::nullopt, 0, rows * d};
      is.positives = std::count(labels.begin(), labels.end(), true);
      if (is.positives > 0 && is.positives < is.cells) is.auc = roc_auc(labels, s).auc;
      out.instance.push_back(is);
    };
    for (double eps : config.eps) {
      for (const auto& s : report.statistics) {
        add_auc("nfbst_" + to_string(s.kind), eps, (1.0 - s.evidence.array()).matrix());
      }
      if (report.point_scores.size() > 0) add_auc("point_grad", eps, report.point_scores);
      if (report.mean_network_scores.size() > 0) add_auc("point_grad_mean_network", eps, report.mean_network_scores);
    }
    return out;
  });
}

EvidenceReport run_pipeline(const ExperimentConfig& config) {
  try {
    config.validate();
  } catch (const std::exception& e) {
    throw StageError("config", e.what());
  }
  auto t0 = Clock::now();
  const LoadedData loaded = load_data(config);
  const double t_data = seconds_since(t0);

  t0 = Clock::now();
  const PosteriorArtifact artifact = config.posterior_path.empty()
                                         ? train_stage(config, loaded.data)
                                         : stage("train", [&] { return load_posterior(config.posterior_path); });
  const double t_train = seconds_since(t0);

  EvidenceReport report = test_stage(config, loaded, artifact);
  report.durations["data"] = t_data;
  report.durations["train"] = t_train;
  if (loaded.truth) report.metrics = evaluate_stage(config, report, *loaded.truth);

  stage("report", [&] {
    write_report(report, config.out);
    if (config.posterior_path.empty()) save_posterior(artifact, config.out / "posterior.json");
    return 0;
  });
  return report;
}

}  // namespace nfbst
