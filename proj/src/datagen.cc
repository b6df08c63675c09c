#include "qontot/datagen.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "qontot/errors.h"
#include "qontot/matrix_io.h"

namespace qontot {

namespace {

// Independent, reproducible stream per (purpose, index...) tuple.
std::mt19937_64 stream(std::uint64_t seed, std::initializer_list<std::uint32_t> tags) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed),
                                   static_cast<std::uint32_t>(seed >> 32)};
  words.insert(words.end(), tags.begin(), tags.end());
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

int next_pow2_exponent(int k) {
  int e = 0;
  while ((1 << e) < k) ++e;
  return e;
}

}  // namespace

std::string perturb_name(PerturbKind k) { return k == PerturbKind::Linear ? "linear" : "recroot"; }

PerturbKind perturb_from_name(const std::string& s) {
  if (s == "linear") return PerturbKind::Linear;
  if (s == "recroot") return PerturbKind::RecRoot;
  throw ValidationError("unknown perturbation '" + s + "' (expected linear or recroot)");
}

std::vector<double> GenConfig::dosage_grid() const {
  if (!dosages.empty()) return dosages;
  std::vector<double> g(dosage_count);
  for (int i = 0; i < dosage_count; ++i) {
    g[i] = dosage_count == 1 ? 0.0 : static_cast<double>(i) / (dosage_count - 1);
  }
  return g;
}

void GenConfig::validate() const {
  std::ostringstream os;
  auto frac = [&](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) os << name << " outside [0, 1]; ";
  };
  frac(responsive_gene_frac, "responsive_gene_frac");
  frac(unresponsive_cell_frac, "unresponsive_cell_frac");
  frac(group_de_prob, "group_de_prob");
  if (dropout_override) frac(*dropout_override, "dropout_override");
  for (double d : dosage_grid()) frac(d, "dosage");
  if (dosages.empty() && dosage_count < 1) os << "dosage_count must be at least 1; ";
  if (genes < 1 || base_cells < 1 || batch_cells < 1 || batches < 1) {
    os << "genes, cells and batches must be positive; ";
  }
  if (clusters < 2) os << "clusters must be at least 2; ";
  if (clusters > base_cells) os << "more clusters than base cells; ";
  if (groups < 1) os << "groups must be at least 1; ";
  if (!(gamma > 0.0)) os << "gamma must be positive; ";
  if (sinkhorn_max_iter < 1) os << "sinkhorn_max_iter must be positive; ";
  if (!(library_scale >= 0.0)) os << "library_scale must be non-negative; ";
  if (!(mean_shape > 0.0 && mean_rate > 0.0)) os << "gamma mean parameters must be positive; ";
  if (!(amp_lo <= amp_hi)) os << "amplitude range is empty; ";
  if (kmeans_restarts < 1 || kmeans_max_iter < 1) os << "k-means budgets must be positive; ";
  if (!os.str().empty()) throw ValidationError("GenConfig: " + os.str());
}

nlohmann::json gen_config_to_json(const GenConfig& c) {
  nlohmann::json j = {{"genes", c.genes},
                      {"base_cells", c.base_cells},
                      {"batch_cells", c.batch_cells},
                      {"batches", c.batches},
                      {"dosages", c.dosage_grid()},
                      {"responsive_gene_frac", c.responsive_gene_frac},
                      {"unresponsive_cell_frac", c.unresponsive_cell_frac},
                      {"perturbation", perturb_name(c.perturbation)},
                      {"a", c.a},
                      {"b", c.b},
                      {"amp_lo", c.amp_lo},
                      {"amp_hi", c.amp_hi},
                      {"mean_shape", c.mean_shape},
                      {"mean_rate", c.mean_rate},
                      {"dropout_midpoint", c.dropout_midpoint},
                      {"dropout_slope", c.dropout_slope},
                      {"groups", c.groups},
                      {"group_de_prob", c.group_de_prob},
                      {"group_fac_loc", c.group_fac_loc},
                      {"group_fac_scale", c.group_fac_scale},
                      {"resample_base", c.resample_base},
                      {"clusters", c.clusters},
                      {"metric", cost_metric_name(c.metric)},
                      {"gamma", c.gamma},
                      {"sinkhorn_max_iter", c.sinkhorn_max_iter},
                      {"kmeans_restarts", c.kmeans_restarts},
                      {"kmeans_max_iter", c.kmeans_max_iter},
                      {"kmeans_fit_cap", c.kmeans_fit_cap},
                      {"seed", c.seed}};
  j["library_scale"] = c.library_scale;
  j["dropout_override"] = c.dropout_override ? nlohmann::json(*c.dropout_override) : nullptr;
  return j;
}

GenConfig gen_config_from_json(const nlohmann::json& j) {
  GenConfig c;
  try {
    c.genes = j.value("genes", c.genes);
    c.base_cells = j.value("base_cells", c.base_cells);
    c.batch_cells = j.value("batch_cells", c.batch_cells);
    c.batches = j.value("batches", c.batches);
    if (j.contains("dosages")) c.dosages = j.at("dosages").get<std::vector<double>>();
    c.dosage_count = j.value("dosage_count", c.dosage_count);
    c.responsive_gene_frac = j.value("responsive_gene_frac", c.responsive_gene_frac);
    c.unresponsive_cell_frac = j.value("unresponsive_cell_frac", c.unresponsive_cell_frac);
    c.perturbation = perturb_from_name(j.value("perturbation", perturb_name(c.perturbation)));
    c.a = j.value("a", c.a);
    c.b = j.value("b", c.b);
    c.amp_lo = j.value("amp_lo", c.amp_lo);
    c.amp_hi = j.value("amp_hi", c.amp_hi);
    c.mean_shape = j.value("mean_shape", c.mean_shape);
    c.mean_rate = j.value("mean_rate", c.mean_rate);
    c.dropout_midpoint = j.value("dropout_midpoint", c.dropout_midpoint);
    c.library_scale = j.value("library_scale", c.library_scale);
    c.dropout_slope = j.value("dropout_slope", c.dropout_slope);
    if (j.contains("dropout_override") && !j.at("dropout_override").is_null()) {
      c.dropout_override = j.at("dropout_override").get<double>();
    }
    c.groups = j.value("groups", c.groups);
    c.group_de_prob = j.value("group_de_prob", c.group_de_prob);
    c.group_fac_loc = j.value("group_fac_loc", c.group_fac_loc);
    c.group_fac_scale = j.value("group_fac_scale", c.group_fac_scale);
    c.resample_base = j.value("resample_base", c.resample_base);
    c.clusters = j.value("clusters", c.clusters);
    c.metric = cost_metric_from_name(j.value("metric", cost_metric_name(c.metric)));
    c.gamma = j.value("gamma", c.gamma);
    c.sinkhorn_max_iter = j.value("sinkhorn_max_iter", c.sinkhorn_max_iter);
    c.kmeans_restarts = j.value("kmeans_restarts", c.kmeans_restarts);
    c.kmeans_max_iter = j.value("kmeans_max_iter", c.kmeans_max_iter);
    c.kmeans_fit_cap = j.value("kmeans_fit_cap", c.kmeans_fit_cap);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("generator config JSON: ") + e.what());
  }
  c.validate();
  return c;
}

double GeneModel::dropout(double mean) const {
  if (dropout_override) return *dropout_override;
  if (!(mean > 0.0)) return 1.0;
  return 1.0 / (1.0 + std::exp(-dropout_slope * (std::log(mean) - dropout_midpoint)));
}

GeneModel make_gene_model(const GenConfig& cfg, std::mt19937_64& rng) {
  GeneModel m;
  m.dropout_midpoint = cfg.dropout_midpoint;
  m.dropout_slope = cfg.dropout_slope;
  m.dropout_override = cfg.dropout_override;
  m.library_scale = cfg.library_scale;
  std::gamma_distribution<double> gamma(cfg.mean_shape, 1.0 / cfg.mean_rate);
  Vector base(cfg.genes);
  for (int g = 0; g < cfg.genes; ++g) base[g] = gamma(rng);
  m.group_means = base.transpose().replicate(cfg.groups, 1);
  if (cfg.groups > 1) {
    // Differential expression per group: log-normal fold changes, half down.
    std::bernoulli_distribution de(cfg.group_de_prob), down(0.5);
    std::lognormal_distribution<double> fac(cfg.group_fac_loc, cfg.group_fac_scale);
    for (int k = 0; k < cfg.groups; ++k) {
      for (int g = 0; g < cfg.genes; ++g) {
        if (!de(rng)) continue;
        double f = fac(rng);
        m.group_means(k, g) *= down(rng) ? 1.0 / f : f;
      }
    }
  }
  return m;
}

Matrix sample_expression(const GeneModel& model, int cells, std::mt19937_64& rng) {
  const int groups = static_cast<int>(model.group_means.rows());
  const int genes = static_cast<int>(model.group_means.cols());
  Matrix dropout(groups, genes);
  for (int k = 0; k < groups; ++k) {
    for (int g = 0; g < genes; ++g) dropout(k, g) = model.dropout(model.group_means(k, g));
  }
  Matrix x(cells, genes);
  std::uniform_int_distribution<int> group(0, groups - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double sigma = model.library_scale;
  std::lognormal_distribution<double> library(-0.5 * sigma * sigma, sigma);
  for (int c = 0; c < cells; ++c) {
    const int k = groups > 1 ? group(rng) : 0;
    const double size = sigma > 0.0 ? library(rng) : 1.0;
    for (int g = 0; g < genes; ++g) {
      const double mean = size * model.group_means(k, g);
      double v = mean > 0.0 ? static_cast<double>(std::poisson_distribution<int>(mean)(rng)) : 0.0;
      if (u(rng) < dropout(k, g)) v = 0.0;
      x(c, g) = v;
    }
  }
  return x;
}

double PerturbationModel::effect(double x) const {
  if (kind == PerturbKind::Linear) return a * x + b;
  return a * std::pow(std::max(x, 1.0), -b);
}

PerturbationModel make_perturbation_model(const GenConfig& cfg, std::mt19937_64& rng) {
  PerturbationModel pm;
  pm.kind = cfg.perturbation;
  pm.a = cfg.a;
  pm.b = cfg.b;
  pm.unresponsive_cell_frac = cfg.unresponsive_cell_frac;
  std::vector<int> genes(cfg.genes);
  std::iota(genes.begin(), genes.end(), 0);
  std::shuffle(genes.begin(), genes.end(), rng);
  const int n = static_cast<int>(std::lround(cfg.responsive_gene_frac * cfg.genes));
  pm.responsive.assign(genes.begin(), genes.begin() + n);
  std::sort(pm.responsive.begin(), pm.responsive.end());
  std::uniform_real_distribution<double> amp(cfg.amp_lo, cfg.amp_hi);
  for (int k = 0; k < n; ++k) pm.amplitude.push_back(amp(rng));
  return pm;
}

Matrix perturb(const Matrix& fresh, double dosage, const PerturbationModel& pm,
               std::mt19937_64& rng) {
  if (!(dosage >= 0.0 && dosage <= 1.0)) {
    std::ostringstream os;
    os << "perturb: dosage " << dosage << " outside [0, 1]";
    throw ValidationError(os.str());
  }
  const int cells = static_cast<int>(fresh.rows());
  std::vector<int> order(cells);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int idle = static_cast<int>(std::lround(pm.unresponsive_cell_frac * cells));
  std::vector<bool> responsive(cells, true);
  for (int k = 0; k < idle; ++k) responsive[order[k]] = false;

  Matrix y = fresh;
  if (dosage == 0.0) return y;
  for (int c = 0; c < cells; ++c) {
    if (!responsive[c]) continue;
    for (size_t k = 0; k < pm.responsive.size(); ++k) {
      const int g = pm.responsive[k];
      const double x = fresh(c, g);
      y(c, g) = std::max(0.0, x + dosage * pm.amplitude[k] * (pm.effect(x) - x));
    }
  }
  return y;
}

namespace {

// Squared distances of every row of x to every centroid.
Matrix sq_distances(const Matrix& x, const Vector& x_norms, const Matrix& centroids) {
  Matrix dist = -2.0 * x * centroids.transpose();
  const Vector c_norms = centroids.rowwise().squaredNorm();
  dist.colwise() += x_norms;
  dist.rowwise() += c_norms.transpose();
  return dist.cwiseMax(0.0);
}

KMeansResult lloyd(const Matrix& x, const Vector& x_norms, int k, std::mt19937_64& rng,
                   int max_iter) {
  const Eigen::Index n = x.rows();
  // k-means++ seeding.
  Matrix c(k, x.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  c.row(0) = x.row(first(rng));
  Vector best = (x.rowwise() - c.row(0)).rowwise().squaredNorm();
  for (int j = 1; j < k; ++j) {
    Eigen::Index pick;
    if (best.sum() > 0.0) {
      std::discrete_distribution<Eigen::Index> d2(best.data(), best.data() + n);
      pick = d2(rng);
    } else {
      pick = first(rng);
    }
    c.row(j) = x.row(pick);
    best = best.cwiseMin((x.rowwise() - c.row(j)).rowwise().squaredNorm());
  }

  KMeansResult r;
  r.labels.assign(n, -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    Matrix dist = sq_distances(x, x_norms, c);
    bool changed = false;
    Vector own(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index arg;
      own[i] = dist.row(i).minCoeff(&arg);
      if (r.labels[i] != arg) {
        r.labels[i] = static_cast<int>(arg);
        changed = true;
      }
    }
    if (!changed) break;
    Matrix sums = Matrix::Zero(k, x.cols());
    std::vector<int> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(r.labels[i]) += x.row(i);
      ++counts[r.labels[i]];
    }
    for (int j = 0; j < k; ++j) {
      if (counts[j] > 0) {
        c.row(j) = sums.row(j) / counts[j];
        continue;
      }
      // Empty cluster: move it to the point farthest from its centroid.
      Eigen::Index far;
      own.maxCoeff(&far);
      c.row(j) = x.row(far);
      own[far] = 0.0;
    }
  }
  Matrix dist = sq_distances(x, x_norms, c);
  r.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index arg;
    r.inertia += dist.row(i).minCoeff(&arg);
    r.labels[i] = static_cast<int>(arg);
  }
  r.centroids = std::move(c);
  return r;
}

}  // namespace

KMeansResult kmeans(const Matrix& x, int k, std::mt19937_64& rng, int restarts, int max_iter) {
  if (k < 1) throw ValidationError("kmeans: k must be at least 1");
  if (x.rows() < k) {
    std::ostringstream os;
    os << "kmeans: " << x.rows() << " points cannot form " << k << " clusters";
    throw ValidationError(os.str());
  }
  const Vector x_norms = x.rowwise().squaredNorm();
  KMeansResult best;
  best.inertia = INFINITY;
  for (int r = 0; r < restarts; ++r) {
    KMeansResult cand = lloyd(x, x_norms, k, rng, max_iter);
    if (cand.inertia < best.inertia) best = std::move(cand);
  }
  return best;
}

std::vector<int> assign_clusters(const Matrix& x, const Matrix& centroids) {
  Matrix dist = sq_distances(x, x.rowwise().squaredNorm(), centroids);
  std::vector<int> labels(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index arg;
    dist.row(i).minCoeff(&arg);
    labels[i] = static_cast<int>(arg);
  }
  return labels;
}

Dataset Dataset::subset(const std::vector<int>& idx) const {
  Dataset out;
  out.meta = meta;
  for (int i : idx) out.samples.push_back(samples.at(i));
  return out;
}

Vector cluster_frequencies(const std::vector<int>& labels, int d, double eps) {
  if (labels.empty()) throw ValidationError("cluster_frequencies: no cells");
  Vector f = Vector::Zero(d);
  for (int l : labels) f[l] += 1.0;
  f /= static_cast<double>(labels.size());
  f = f.cwiseMax(eps);
  return f / f.sum();
}

Matrix padded_sinkhorn(const Vector& mu, const Vector& nu, const Matrix& cost, int k,
                       const SinkhornConfig& cfg) {
  const int d = static_cast<int>(mu.size());
  if (k < 1 || k > d) throw ValidationError("padded_sinkhorn: invalid real cluster count");
  Matrix plan = Matrix::Zero(d, d);
  Vector a = mu.head(k), b = nu.head(k);
  // The padded masses of mu and nu can differ by rounding; match the real
  // blocks' masses exactly before solving.
  b *= a.sum() / b.sum();
  plan.topLeftCorner(k, k) =
      sinkhorn(QuasiDistribution(a), QuasiDistribution(b), CostMatrix(cost.topLeftCorner(k, k)), cfg)
          .entries();
  for (int p = k; p < d; ++p) plan(p, p) = mu[p];
  return plan;
}

Dataset build_dataset(const GenConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng = stream(cfg.seed, {0});
  const GeneModel genes = make_gene_model(cfg, rng);
  const PerturbationModel pm = make_perturbation_model(cfg, rng);
  const std::vector<double> grid = cfg.dosage_grid();
  const int nd = static_cast<int>(grid.size());
  auto base_of = [&](int dose) {
    std::mt19937_64 r = stream(cfg.seed, {1, static_cast<std::uint32_t>(cfg.resample_base ? dose : 0)});
    return sample_expression(genes, cfg.base_cells, r);
  };

  // Fit on the pooled unperturbed cells, subsampled to the fitting cap.
  Matrix pool;
  if (!cfg.resample_base) {
    pool = base_of(0);
  } else {
    const int per = std::max(1, std::min(cfg.base_cells, cfg.kmeans_fit_cap / nd));
    pool.resize(static_cast<Eigen::Index>(per) * nd, cfg.genes);
    for (int i = 0; i < nd; ++i) pool.middleRows(i * per, per) = base_of(i).topRows(per);
  }
  if (pool.rows() > cfg.kmeans_fit_cap) {
    std::vector<int> rows(pool.rows());
    std::iota(rows.begin(), rows.end(), 0);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(cfg.kmeans_fit_cap);
    std::sort(rows.begin(), rows.end());
    Matrix sub(cfg.kmeans_fit_cap, cfg.genes);
    for (int i = 0; i < cfg.kmeans_fit_cap; ++i) sub.row(i) = pool.row(rows[i]);
    pool = std::move(sub);
  }
  const KMeansResult km = kmeans(pool, cfg.clusters, rng, cfg.kmeans_restarts, cfg.kmeans_max_iter);

  const int k = cfg.clusters;
  const int d = 1 << next_pow2_exponent(k);
  Matrix real_cost = cost_from_centroids(km.centroids, cfg.metric).entries();
  const double scale = real_cost.maxCoeff();
  if (scale > 0.0) real_cost /= scale;
  Matrix cost = Matrix::Ones(d, d);
  cost.topLeftCorner(k, k) = real_cost;
  for (int p = k; p < d; ++p) cost(p, p) = 0.0;

  Dataset ds;
  ds.meta.d = d;
  ds.meta.k = k;
  ds.meta.task = TargetKind::Transport;
  ds.meta.gamma = cfg.gamma;
  ds.meta.cost = cost;
  ds.meta.seed = cfg.seed;
  ds.meta.context_dim = 1;
  ds.meta.generator = gen_config_to_json(cfg);
  ds.meta.generator["cost_scale"] = scale;

  const SinkhornConfig sk{cfg.gamma, 1e-9, cfg.sinkhorn_max_iter};
  Vector mu;
  for (int i = 0; i < nd; ++i) {
    if (i == 0 || cfg.resample_base) mu = cluster_frequencies(assign_clusters(base_of(i), km.centroids), d);
    for (int b = 0; b < cfg.batches; ++b) {
      std::mt19937_64 r = stream(cfg.seed, {2, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(b)});
      Matrix y = perturb(sample_expression(genes, cfg.batch_cells, r), grid[i], pm, r);
      Sample s;
      s.context = Vector::Constant(1, grid[i]);
      s.mu = mu;
      s.nu = cluster_frequencies(assign_clusters(y, km.centroids), d);
      s.plan = padded_sinkhorn(s.mu, s.nu, cost, k, sk);
      // Column sums of the solved plan are the reference target marginal.
      s.nu = s.plan->colwise().sum().transpose();
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

SplitResult split(const Dataset& ds, SplitKind kind, double frac, std::mt19937_64& rng) {
  if (!(frac > 0.0 && frac < 1.0)) {
    std::ostringstream os;
    os << "split: fraction " << frac << " outside (0, 1)";
    throw ValidationError(os.str());
  }
  // Group sample indices by context, in order of first appearance.
  std::map<std::vector<double>, int> key_of;
  std::vector<std::vector<int>> groups;
  std::vector<double> lead;
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const Vector& c = ds.samples[i].context;
    std::vector<double> key(c.data(), c.data() + c.size());
    auto [it, fresh] = key_of.emplace(key, static_cast<int>(groups.size()));
    if (fresh) {
      groups.emplace_back();
      lead.push_back(key.empty() ? 0.0 : key[0]);
    }
    groups[it->second].push_back(static_cast<int>(i));
  }
  const int u = static_cast<int>(groups.size());
  if (u < 2) throw ValidationError("split: need at least two distinct contexts");
  const int n_test = std::clamp(static_cast<int>(std::lround(frac * u)), 1, u - 1);
  std::vector<int> order(u);
  std::iota(order.begin(), order.end(), 0);
  if (kind == SplitKind::Random) {
    std::shuffle(order.begin(), order.end(), rng);
  } else {
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return lead[a] > lead[b]; });
  }
  std::vector<bool> test(u, false);
  for (int k = 0; k < n_test; ++k) test[order[k]] = true;
  SplitResult r;
  for (int g = 0; g < u; ++g) {
    auto& side = test[g] ? r.test : r.train;
    side.insert(side.end(), groups[g].begin(), groups[g].end());
  }
  std::sort(r.train.begin(), r.train.end());
  std::sort(r.test.begin(), r.test.end());
  return r;
}

Dataset gen_dsm_dataset(const EncodingSpec& spec, int count, double lo, double hi,
                        std::mt19937_64& rng, std::vector<double>* teacher_theta) {
  spec.validate();
  if (spec.target != TargetKind::Dsm) throw ValidationError("gen_dsm_dataset: needs a dsm target");
  if (count < 2) throw ValidationError("gen_dsm_dataset: count must be at least 2");
  if (!(lo <= hi)) throw ValidationError("gen_dsm_dataset: empty parameter range");
  std::uniform_real_distribution<double> u(lo, hi), ctx(0.0, 1.0);
  std::vector<double> theta(param_count(spec.ansatz));
  for (auto& t : theta) t = lo == hi ? lo : u(rng);
  const int d = spec.d();
  Dataset ds;
  ds.meta.d = d;
  ds.meta.k = d;
  ds.meta.task = TargetKind::Dsm;
  ds.meta.gamma = 0.0;
  ds.meta.cost = Matrix::Zero(d, d);
  ds.meta.context_dim = spec.ansatz.context_dim;
  ds.meta.generator = {{"encoding", encoding_to_json(spec)},
                       {"count", count},
                       {"param_range", {lo, hi}},
                       {"teacher_theta", theta}};
  for (int i = 0; i < count; ++i) {
    Sample s;
    s.context.resize(spec.ansatz.context_dim);
    for (auto& c : s.context) c = ctx(rng);
    std::vector<double> p(s.context.data(), s.context.data() + s.context.size());
    s.dsm = exact_dsm(spec, theta, p).entries();
    s.mu = Vector::Constant(d, 1.0 / d);
    s.nu = s.mu;
    ds.samples.push_back(std::move(s));
  }
  if (teacher_theta) *teacher_theta = theta;
  return ds;
}

nlohmann::json dataset_to_json(const Dataset& ds) {
  nlohmann::json meta = {{"d", ds.meta.d},
                         {"k", ds.meta.k},
                         {"task", target_name(ds.meta.task)},
                         {"gamma", ds.meta.gamma},
                         {"cost", matrix_to_json(ds.meta.cost)},
                         {"seed", ds.meta.seed},
                         {"context_dim", ds.meta.context_dim},
                         {"generator", ds.meta.generator}};
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : ds.samples) {
    nlohmann::json j = {{"context", vector_to_json(s.context)},
                        {"mu", vector_to_json(s.mu)},
                        {"nu", vector_to_json(s.nu)}};
    if (s.plan) j["plan"] = matrix_to_json(*s.plan);
    if (s.dsm) j["dsm"] = matrix_to_json(*s.dsm);
    samples.push_back(std::move(j));
  }
  return {{"meta", meta}, {"samples", samples}};
}

Dataset dataset_from_json(const nlohmann::json& j) {
  Dataset ds;
  try {
    const auto& m = j.at("meta");
    ds.meta.d = m.at("d").get<int>();
    ds.meta.k = m.value("k", ds.meta.d);
    ds.meta.task = target_from_name(m.at("task").get<std::string>());
    ds.meta.gamma = m.at("gamma").get<double>();
    ds.meta.cost = matrix_from_json(m.at("cost"));
    ds.meta.seed = m.value("seed", std::uint64_t{0});
    ds.meta.context_dim = m.at("context_dim").get<int>();
    ds.meta.generator = m.value("generator", nlohmann::json::object());
    for (const auto& sj : j.at("samples")) {
      Sample s;
      s.context = vector_from_json(sj.at("context"));
      s.mu = vector_from_json(sj.at("mu"));
      s.nu = vector_from_json(sj.at("nu"));
      if (sj.contains("plan")) s.plan = matrix_from_json(sj.at("plan"));
      if (sj.contains("dsm")) s.dsm = matrix_from_json(sj.at("dsm"));
      ds.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("dataset JSON: ") + e.what());
  }
  const int d = ds.meta.d;
  if (d < 1 || ds.meta.cost.rows() != d || ds.meta.cost.cols() != d) {
    throw ValidationError("dataset: cost matrix does not match d");
  }
  CostMatrix check_cost(ds.meta.cost);
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    auto fail = [&](const std::string& what) {
      std::ostringstream os;
      os << "dataset sample " << i << ": " << what;
      throw ValidationError(os.str());
    };
    if (s.context.size() != ds.meta.context_dim) fail("context length differs from context_dim");
    if (s.mu.size() != d || s.nu.size() != d) fail("marginal length differs from d");
    QuasiDistribution mu(s.mu), nu(s.nu);
    if (std::abs(mu.mass() - 1.0) > 1e-9 || std::abs(nu.mass() - 1.0) > 1e-9) {
      fail("marginals do not sum to 1");
    }
    if (ds.meta.task == TargetKind::Transport) {
      if (!s.plan) fail("transport sample without plan");
      TransportPlan(*s.plan, mu, s.nu);
    } else {
      if (!s.dsm) fail("dsm sample without target");
      DoublyStochasticMatrix q(*s.dsm);
      if (q.size() != d) fail("dsm order differs from d");
    }
  }
  return ds;
}

}  // namespace qontot
