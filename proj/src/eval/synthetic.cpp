#include "maldistill/eval/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "maldistill/core/random.hpp"

namespace maldistill::eval {

void SyntheticSpec::validate() const {
  if (n_samples < 1) throw std::invalid_argument("synthetic: n_samples must be >= 1");
  if (!(class_balance > 0 && class_balance < 1)) {
    throw std::invalid_argument("synthetic: class_balance must lie in (0, 1)");
  }
  if (static_dim < 2 || dynamic_dim < 2 || opcode_dim == 1) {
    throw std::invalid_argument("synthetic: view dims must be >= 2");
  }
  for (double s : {static_strength, dynamic_strength, opcode_strength}) {
    if (!(s >= 0 && s <= 1)) throw std::invalid_argument("synthetic: strengths must lie in [0, 1]");
  }
  if (!(rho >= 0 && rho <= 1)) throw std::invalid_argument("synthetic: rho must lie in [0, 1]");
  if (!(noise >= 0) || !std::isfinite(noise)) throw std::invalid_argument("synthetic: noise must be >= 0");
  if (n_components < 1) throw std::invalid_argument("synthetic: n_components must be >= 1");
  if (!(separation >= 0) || !std::isfinite(separation)) {
    throw std::invalid_argument("synthetic: separation must be >= 0");
  }
  if (window < 1) throw std::invalid_argument("synthetic: window must be >= 1");
  if (!std::isfinite(binary_threshold)) throw std::invalid_argument("synthetic: threshold must be finite");
}

std::size_t SyntheticSpec::static_components() const {
  return static_cast<std::size_t>(std::lround(rho * static_cast<double>(n_components)));
}

nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"n_samples", s.n_samples},
          {"class_balance", s.class_balance},
          {"static_dim", s.static_dim},
          {"dynamic_dim", s.dynamic_dim},
          {"opcode_dim", s.opcode_dim},
          {"static_strength", s.static_strength},
          {"dynamic_strength", s.dynamic_strength},
          {"opcode_strength", s.opcode_strength},
          {"rho", s.rho},
          {"noise", s.noise},
          {"n_components", s.n_components},
          {"separation", s.separation},
          {"window", s.window},
          {"n_nuisance", s.n_nuisance},
          {"binary_threshold", s.binary_threshold},
          {"seed", s.seed}};
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  s.n_samples = j.value("n_samples", s.n_samples);
  s.class_balance = j.value("class_balance", s.class_balance);
  s.static_dim = j.value("static_dim", s.static_dim);
  s.dynamic_dim = j.value("dynamic_dim", s.dynamic_dim);
  s.opcode_dim = j.value("opcode_dim", s.opcode_dim);
  s.static_strength = j.value("static_strength", s.static_strength);
  s.dynamic_strength = j.value("dynamic_strength", s.dynamic_strength);
  s.opcode_strength = j.value("opcode_strength", s.opcode_strength);
  s.rho = j.value("rho", s.rho);
  s.noise = j.value("noise", s.noise);
  s.n_components = j.value("n_components", s.n_components);
  s.separation = j.value("separation", s.separation);
  s.window = j.value("window", s.window);
  s.n_nuisance = j.value("n_nuisance", s.n_nuisance);
  s.binary_threshold = j.value("binary_threshold", s.binary_threshold);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

double latent_bayes_accuracy(double separation, std::size_t k) {
  return 0.5 * std::erfc(-separation * std::sqrt(static_cast<double>(k)) / std::sqrt(2.0));
}

namespace {

// Constant loading of +1 or -1 over [start, start + width) for one latent.
struct Window {
  std::size_t latent;
  std::size_t start;
  std::vector<float> pattern;
};

struct ViewLayout {
  std::size_t dim;
  double strength;
  std::vector<Window> signal;
  std::vector<Window> nuisance;
};

Window place(std::size_t latent, std::size_t dim, std::size_t width, core::Rng& rng) {
  width = std::min(width, dim);
  Window w{latent, static_cast<std::size_t>(rng.below(dim - width + 1)), {}};
  w.pattern.assign(width, rng.bernoulli(0.5) ? 1.0f : -1.0f);
  return w;
}

ViewLayout layout(std::size_t dim, double strength, std::size_t first, std::size_t last,
                  const SyntheticSpec& s, core::Rng rng) {
  ViewLayout l{dim, strength, {}, {}};
  for (std::size_t k = first; k < last; ++k) l.signal.push_back(place(k, dim, s.window, rng));
  for (std::size_t f = 0; f < s.n_nuisance; ++f) {
    l.nuisance.push_back(place(f, dim, 4 * s.window, rng));
  }
  return l;
}

// Fills `row` with the view's real-valued response for one sample.
void render(const ViewLayout& l, const std::vector<double>& latents, double noise,
            core::Rng& rng, std::vector<float>& row) {
  row.resize(l.dim);
  for (auto& v : row) v = static_cast<float>(noise * rng.normal());
  for (const auto& w : l.signal) {
    const float a = static_cast<float>(l.strength * latents[w.latent]);
    for (std::size_t i = 0; i < w.pattern.size(); ++i) row[w.start + i] += a * w.pattern[i];
  }
  for (const auto& w : l.nuisance) {
    const float z = static_cast<float>(rng.normal());
    for (std::size_t i = 0; i < w.pattern.size(); ++i) row[w.start + i] += z * w.pattern[i];
  }
}

featurize::SparseRow threshold(const std::vector<float>& row, double cut) {
  featurize::SparseRow out;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (row[j] > cut) out.push_back(static_cast<std::uint32_t>(j));
  }
  return out;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  core::Rng root(spec.seed);
  const std::size_t m = spec.n_components;
  const std::size_t k_static = spec.static_components();
  const ViewLayout stat = layout(spec.static_dim, spec.static_strength, 0, k_static, spec, root.fork(1));
  const ViewLayout dyn = layout(spec.dynamic_dim, spec.dynamic_strength, k_static, m, spec, root.fork(2));
  const bool with_opcode = spec.opcode_dim > 0;
  const ViewLayout opc = with_opcode
                             ? layout(spec.opcode_dim, spec.opcode_strength, 0, m, spec, root.fork(3))
                             : ViewLayout{};
  core::Rng labels_rng = root.fork(4);
  core::Rng latent_rng = root.fork(5);
  core::Rng static_rng = root.fork(6);
  core::Rng dynamic_rng = root.fork(7);
  core::Rng opcode_rng = root.fork(8);

  Dataset ds;
  ds.views.push_back(FeatureMatrix::dense(View::ember, spec.n_samples, spec.static_dim));
  ds.views.push_back(FeatureMatrix::sparse(View::apiarg, spec.dynamic_dim));
  if (with_opcode) ds.views.push_back(FeatureMatrix::sparse(View::opcode, spec.opcode_dim));

  std::vector<double> latents(m);
  std::vector<float> row;
  char id[32];
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const int y = labels_rng.bernoulli(spec.class_balance) ? 1 : 0;
    const double sign = y ? 1.0 : -1.0;
    for (auto& c : latents) c = sign * spec.separation + latent_rng.normal();

    render(stat, latents, spec.noise, static_rng, row);
    std::copy(row.begin(), row.end(), ds.views[0].dense_row(i).begin());
    render(dyn, latents, spec.noise, dynamic_rng, row);
    ds.views[1].push_sparse(threshold(row, spec.binary_threshold));
    if (with_opcode) {
      render(opc, latents, spec.noise, opcode_rng, row);
      ds.views[2].push_sparse(threshold(row, spec.binary_threshold));
    }
    std::snprintf(id, sizeof id, "syn-%06zu", i);
    ds.ids.emplace_back(id);
    ds.labels.push_back(y);
  }
  ds.provenance = {{"generator", "synthetic"}, {"spec", to_json(spec)}};
  return ds;
}

}  // namespace maldistill::eval
