#include "qflow/geometry.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>

#include "qflow/kernels.hpp"

namespace qflow {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

// FFTW plan creation is not thread-safe; execution on distinct buffers is.
std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

std::vector<std::complex<double>>& scratch_a() {
  static thread_local std::vector<std::complex<double>> v;
  return v;
}
std::vector<std::complex<double>>& scratch_b() {
  static thread_local std::vector<std::complex<double>> v;
  return v;
}

fftw_complex* as_fftw(std::complex<double>* p) { return reinterpret_cast<fftw_complex*>(p); }

double sphere_volume(int n) {
  switch (n) {
    case 2: return 4.0 * kPi;                    // S^2
    case 4: return 8.0 * kPi * kPi / 3.0;        // S^4
    case 6: return 16.0 * kPi * kPi * kPi / 15.0;  // S^6
    default: throw std::invalid_argument("sphere volume: n must be 2, 4 or 6");
  }
}

double equator_volume(int n) {
  // vol(S^{n-1}), the factor relating the zonal line integral to dmu.
  switch (n) {
    case 2: return 2.0 * kPi;
    case 4: return 2.0 * kPi * kPi;
    case 6: return kPi * kPi * kPi;
    default: throw std::invalid_argument("equator volume: n must be 2, 4 or 6");
  }
}

// int_{-1}^{1} (1-x^2)^alpha dx for alpha = (n-2)/2 in {0,1,2}.
double jacobi_mu0(int alpha2) {
  switch (alpha2) {
    case 0: return 2.0;
    case 1: return 4.0 / 3.0;
    case 2: return 16.0 / 15.0;
    default: throw std::invalid_argument("unsupported Jacobi weight exponent");
  }
}

}  // namespace

std::shared_ptr<const Geometry> Geometry::make(GeomKind kind, int n, int resolution) {
  if (n % 2 != 0) throw std::invalid_argument("geometry dimension must be even");
  if (n != 2 && n != 4 && n != 6)
    throw std::invalid_argument("geometry dimension must be one of {2, 4, 6}");
  if (resolution < 8) throw std::invalid_argument("resolution must be at least 8");
  auto g = std::shared_ptr<Geometry>(new Geometry());
  g->kind_ = kind;
  g->dim_ = n;
  g->resolution_ = resolution;
  switch (kind) {
    case GeomKind::kTorus: g->init_torus(); break;
    case GeomKind::kZonalSphere: g->init_sphere(); break;
    default: throw std::invalid_argument("unsupported geometry kind");
  }
  return g;
}

Geometry::~Geometry() {
  std::lock_guard<std::mutex> lock(fftw_mutex());
  for (void* p : {plan_fwd_, plan_bwd_, plan_fine_fwd_, plan_fine_bwd_})
    if (p != nullptr) fftw_destroy_plan(static_cast<fftw_plan>(p));
}

void Geometry::init_torus() {
  const int n = dim_;
  const int N = resolution_;
  std::size_t nodes = 1;
  for (int i = 0; i < n; ++i) nodes *= static_cast<std::size_t>(N);
  volume_ = std::pow(2.0 * kPi, n);
  weights_.assign(nodes, volume_ / static_cast<double>(nodes));
  max_freq_ = (N - 1) / 2;

  // Half-space frequency enumeration: odometer over [-kmax, kmax]^n with the
  // first axis slowest; keep vectors whose first nonzero component is > 0.
  std::vector<int> k(n, -max_freq_);
  while (true) {
    int lead = 0;
    for (int i = 0; i < n; ++i)
      if (k[i] != 0) { lead = k[i]; break; }
    if (lead > 0) freqs_.push_back(k);
    int axis = n - 1;
    while (axis >= 0 && k[axis] == max_freq_) { k[axis] = -max_freq_; --axis; }
    if (axis < 0) break;
    ++k[axis];
  }

  laplace_eigs_.assign(1 + 2 * freqs_.size(), 0.0);
  for (std::size_t h = 0; h < freqs_.size(); ++h) {
    double k2 = 0.0;
    for (int i = 0; i < n; ++i) k2 += static_cast<double>(freqs_[h][i]) * freqs_[h][i];
    laplace_eigs_[1 + 2 * h] = k2;
    laplace_eigs_[2 + 2 * h] = k2;
  }

  auto flat_index = [n](const std::vector<int>& kk, int grid) {
    std::size_t idx = 0;
    for (int i = 0; i < n; ++i) {
      int m = ((kk[i] % grid) + grid) % grid;
      idx = idx * static_cast<std::size_t>(grid) + static_cast<std::size_t>(m);
    }
    return idx;
  };
  fft_pos_.resize(freqs_.size());
  fft_neg_.resize(freqs_.size());
  fft_fine_pos_.resize(freqs_.size());
  fft_fine_neg_.resize(freqs_.size());
  std::vector<int> neg(n);
  for (std::size_t h = 0; h < freqs_.size(); ++h) {
    for (int i = 0; i < n; ++i) neg[i] = -freqs_[h][i];
    fft_pos_[h] = flat_index(freqs_[h], N);
    fft_neg_[h] = flat_index(neg, N);
    fft_fine_pos_[h] = flat_index(freqs_[h], 2 * N);
    fft_fine_neg_[h] = flat_index(neg, 2 * N);
  }

  std::size_t fine_nodes = 1;
  for (int i = 0; i < n; ++i) fine_nodes *= static_cast<std::size_t>(2 * N);
  fine_weights_.assign(fine_nodes, volume_ / static_cast<double>(fine_nodes));

  std::vector<std::complex<double>> buf_a(fine_nodes), buf_b(fine_nodes);
  std::vector<int> dims(n, N), fine_dims(n, 2 * N);
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  std::lock_guard<std::mutex> lock(fftw_mutex());
  plan_fwd_ = fftw_plan_dft(n, dims.data(), as_fftw(buf_a.data()), as_fftw(buf_b.data()),
                            FFTW_FORWARD, flags);
  plan_bwd_ = fftw_plan_dft(n, dims.data(), as_fftw(buf_a.data()), as_fftw(buf_b.data()),
                            FFTW_BACKWARD, flags);
  plan_fine_fwd_ = fftw_plan_dft(n, fine_dims.data(), as_fftw(buf_a.data()),
                                 as_fftw(buf_b.data()), FFTW_FORWARD, flags);
  plan_fine_bwd_ = fftw_plan_dft(n, fine_dims.data(), as_fftw(buf_a.data()),
                                 as_fftw(buf_b.data()), FFTW_BACKWARD, flags);
  if (plan_fwd_ == nullptr || plan_bwd_ == nullptr || plan_fine_fwd_ == nullptr ||
      plan_fine_bwd_ == nullptr)
    throw std::runtime_error("FFTW plan creation failed");
}

void Geometry::init_sphere() {
  const int n = dim_;
  const int L = resolution_;
  max_degree_ = L;
  const int nodes = 2 * (L + 1);
  const int alpha2 = (n - 2) / 2;  // weight (1-x^2)^alpha2, integer here
  const double mu0 = jacobi_mu0(alpha2);
  const double ring = equator_volume(n);
  volume_ = sphere_volume(n);

  // Golub-Welsch: nodes are eigenvalues of the symmetric recurrence matrix,
  // weights come from the first eigenvector components.
  const double a = static_cast<double>(alpha2);
  std::vector<double> beta(nodes);
  for (int kk = 1; kk < nodes; ++kk) {
    const double k = kk;
    beta[kk] = k * (k + 2.0 * a) / ((2.0 * k + 2.0 * a + 1.0) * (2.0 * k + 2.0 * a - 1.0));
  }
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(nodes, nodes);
  for (int i = 0; i + 1 < nodes; ++i) {
    const double b = std::sqrt(beta[i + 1]);
    T(i, i + 1) = b;
    T(i + 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
  if (es.info() != Eigen::Success) throw std::runtime_error("quadrature eigensolve failed");

  nodes_x_.resize(nodes);
  weights_.resize(nodes);
  for (int i = 0; i < nodes; ++i) {
    nodes_x_[i] = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    weights_[i] = ring * mu0 * v0 * v0;
  }

  // Orthonormal basis values at the nodes via the same recurrence.
  recur_b_.resize(L + 2);
  for (int kk = 1; kk <= L + 1; ++kk) recur_b_[kk] = std::sqrt(beta[kk]);
  basis_p0_ = 1.0 / std::sqrt(ring * mu0);
  basis_.resize(static_cast<std::size_t>(nodes) * (L + 1));
  basis_wT_.resize(basis_.size());
  for (int i = 0; i < nodes; ++i) {
    const double x = nodes_x_[i];
    double pm1 = 0.0, p = basis_p0_;
    for (int l = 0; l <= L; ++l) {
      basis_[static_cast<std::size_t>(i) * (L + 1) + l] = p;
      basis_wT_[static_cast<std::size_t>(l) * nodes + i] = weights_[i] * p;
      const double pn = (x * p - recur_b_[l] * pm1) / recur_b_[l + 1];
      pm1 = p;
      p = pn;
    }
  }

  laplace_eigs_.resize(L + 1);
  for (int l = 0; l <= L; ++l)
    laplace_eigs_[l] = static_cast<double>(l) * (l + n - 1);
}

double Geometry::node_coord(std::size_t i, int axis) const {
  if (kind_ == GeomKind::kZonalSphere) return nodes_x_[i];
  const int N = resolution_;
  std::size_t stride = 1;
  for (int a = dim_ - 1; a > axis; --a) stride *= static_cast<std::size_t>(N);
  const std::size_t j = (i / stride) % static_cast<std::size_t>(N);
  return 2.0 * kPi * static_cast<double>(j) / static_cast<double>(N);
}

std::string Geometry::mode_label(std::size_t m) const {
  if (kind_ == GeomKind::kZonalSphere) return "l=" + std::to_string(m);
  if (m == 0) return "const";
  const std::size_t h = (m - 1) / 2;
  std::ostringstream os;
  os << ((m - 1) % 2 == 0 ? "cos(" : "sin(");
  for (int i = 0; i < dim_; ++i) os << (i > 0 ? "," : "") << freqs_[h][i];
  os << ")";
  return os.str();
}

std::size_t Geometry::sphere_mode(int l) const {
  if (kind_ != GeomKind::kZonalSphere) throw std::invalid_argument("sphere_mode on torus");
  if (l < 0 || l > max_degree_) throw std::invalid_argument("degree out of band");
  return static_cast<std::size_t>(l);
}

std::size_t Geometry::torus_mode(const std::vector<int>& k, bool sine) const {
  if (kind_ != GeomKind::kTorus) throw std::invalid_argument("torus_mode on sphere");
  if (static_cast<int>(k.size()) != dim_) throw std::invalid_argument("frequency rank mismatch");
  for (std::size_t h = 0; h < freqs_.size(); ++h)
    if (freqs_[h] == k) return 1 + 2 * h + (sine ? 1 : 0);
  throw std::invalid_argument("frequency not in the half-space band");
}

const std::vector<int>& Geometry::mode_frequency(std::size_t m) const {
  if (kind_ != GeomKind::kTorus) throw std::invalid_argument("mode_frequency on sphere");
  if (m == 0 || m >= mode_count()) throw std::invalid_argument("no frequency for this mode");
  return freqs_[(m - 1) / 2];
}

void Geometry::to_spectral(const double* grid, double* spec) const {
  if (kind_ == GeomKind::kZonalSphere) {
    const auto& k = kernels::active();
    const std::size_t N = node_count();
    for (std::size_t l = 0; l < mode_count(); ++l)
      spec[l] = k.dot(basis_wT_.data() + l * N, grid, N);
    return;
  }
  const std::size_t M = node_count();
  auto& a = scratch_a();
  auto& b = scratch_b();
  a.resize(M);
  b.resize(M);
  for (std::size_t i = 0; i < M; ++i) a[i] = grid[i];
  fftw_execute_dft(static_cast<fftw_plan>(plan_fwd_), as_fftw(a.data()), as_fftw(b.data()));
  const double s = 1.0 / static_cast<double>(M);
  const double sqrt_v = std::sqrt(volume_);
  const double sqrt_2v = std::sqrt(2.0 * volume_);
  spec[0] = b[0].real() * s * sqrt_v;
  for (std::size_t h = 0; h < freqs_.size(); ++h) {
    const std::complex<double> z = b[fft_pos_[h]] * s;
    spec[1 + 2 * h] = sqrt_2v * z.real();
    spec[2 + 2 * h] = -sqrt_2v * z.imag();
  }
}

void Geometry::to_grid(const double* spec, double* grid) const {
  if (kind_ == GeomKind::kZonalSphere) {
    const auto& k = kernels::active();
    const std::size_t L1 = mode_count();
    for (std::size_t i = 0; i < node_count(); ++i)
      grid[i] = k.dot(basis_.data() + i * L1, spec, L1);
    return;
  }
  const std::size_t M = node_count();
  auto& a = scratch_a();
  auto& b = scratch_b();
  a.assign(M, {0.0, 0.0});
  b.resize(M);
  const double inv_sqrt_v = 1.0 / std::sqrt(volume_);
  const double inv_sqrt_2v = 1.0 / std::sqrt(2.0 * volume_);
  a[0] = {spec[0] * inv_sqrt_v, 0.0};
  for (std::size_t h = 0; h < freqs_.size(); ++h) {
    const double re = spec[1 + 2 * h] * inv_sqrt_2v;
    const double im = -spec[2 + 2 * h] * inv_sqrt_2v;
    a[fft_pos_[h]] = {re, im};
    a[fft_neg_[h]] = {re, -im};
  }
  fftw_execute_dft(static_cast<fftw_plan>(plan_bwd_), as_fftw(a.data()), as_fftw(b.data()));
  for (std::size_t i = 0; i < M; ++i) grid[i] = b[i].real();
}

std::size_t Geometry::fine_node_count() const {
  if (kind_ == GeomKind::kZonalSphere) return node_count();
  return fine_weights_.size();
}

const std::vector<double>& Geometry::fine_weights() const {
  if (kind_ == GeomKind::kZonalSphere) return weights_;
  return fine_weights_;
}

void Geometry::to_fine_grid(const double* spec, double* fine) const {
  if (kind_ == GeomKind::kZonalSphere) {
    to_grid(spec, fine);
    return;
  }
  const std::size_t M = fine_node_count();
  auto& a = scratch_a();
  auto& b = scratch_b();
  a.assign(M, {0.0, 0.0});
  b.resize(M);
  const double inv_sqrt_v = 1.0 / std::sqrt(volume_);
  const double inv_sqrt_2v = 1.0 / std::sqrt(2.0 * volume_);
  a[0] = {spec[0] * inv_sqrt_v, 0.0};
  for (std::size_t h = 0; h < freqs_.size(); ++h) {
    const double re = spec[1 + 2 * h] * inv_sqrt_2v;
    const double im = -spec[2 + 2 * h] * inv_sqrt_2v;
    a[fft_fine_pos_[h]] = {re, im};
    a[fft_fine_neg_[h]] = {re, -im};
  }
  fftw_execute_dft(static_cast<fftw_plan>(plan_fine_bwd_), as_fftw(a.data()),
                   as_fftw(b.data()));
  for (std::size_t i = 0; i < M; ++i) fine[i] = b[i].real();
}

void Geometry::fine_to_spectral(const double* fine, double* spec) const {
  if (kind_ == GeomKind::kZonalSphere) {
    to_spectral(fine, spec);
    return;
  }
  const std::size_t M = fine_node_count();
  auto& a = scratch_a();
  auto& b = scratch_b();
  a.resize(M);
  b.resize(M);
  for (std::size_t i = 0; i < M; ++i) a[i] = fine[i];
  fftw_execute_dft(static_cast<fftw_plan>(plan_fine_fwd_), as_fftw(a.data()),
                   as_fftw(b.data()));
  const double s = 1.0 / static_cast<double>(M);
  const double sqrt_v = std::sqrt(volume_);
  const double sqrt_2v = std::sqrt(2.0 * volume_);
  spec[0] = b[0].real() * s * sqrt_v;
  for (std::size_t h = 0; h < freqs_.size(); ++h) {
    const std::complex<double> z = b[fft_fine_pos_[h]] * s;
    spec[1 + 2 * h] = sqrt_2v * z.real();
    spec[2 + 2 * h] = -sqrt_2v * z.imag();
  }
}

double Geometry::evaluate_zonal(const double* spec, double x) const {
  if (kind_ != GeomKind::kZonalSphere)
    throw std::invalid_argument("evaluate_zonal on torus geometry");
  x = std::min(1.0, std::max(-1.0, x));
  double pm1 = 0.0, p = basis_p0_, acc = 0.0;
  for (int l = 0; l <= max_degree_; ++l) {
    acc += spec[l] * p;
    const double pn = (x * p - recur_b_[l] * pm1) / recur_b_[l + 1];
    pm1 = p;
    p = pn;
  }
  return acc;
}

std::string Geometry::descriptor() const {
  std::ostringstream os;
  os << "kind = " << (kind_ == GeomKind::kTorus ? "torus" : "zonal-sphere") << "\n";
  os << "n = " << dim_ << "\n";
  os << "resolution = " << resolution_ << "\n";
  return os.str();
}

GridField make_grid(std::shared_ptr<const Geometry> geom,
                    const std::function<double(const double*)>& f) {
  GridField out{geom, std::vector<double>(geom->node_count())};
  const int n_axes = geom->kind() == GeomKind::kZonalSphere ? 1 : geom->dim();
  std::vector<double> c(n_axes);
  for (std::size_t i = 0; i < geom->node_count(); ++i) {
    for (int a = 0; a < n_axes; ++a) c[a] = geom->node_coord(i, a);
    out.values[i] = f(c.data());
  }
  return out;
}

GridField zero_grid(std::shared_ptr<const Geometry> geom) {
  return GridField{geom, std::vector<double>(geom->node_count(), 0.0)};
}

SpectralField zero_spectral(std::shared_ptr<const Geometry> geom) {
  return SpectralField{geom, std::vector<double>(geom->mode_count(), 0.0)};
}

SpectralField to_spectral(const GridField& f) {
  if (!f.geom) throw std::invalid_argument("field without geometry");
  if (f.values.size() != f.geom->node_count())
    throw std::invalid_argument("grid field size mismatch");
  SpectralField out{f.geom, std::vector<double>(f.geom->mode_count())};
  f.geom->to_spectral(f.values.data(), out.coeffs.data());
  return out;
}

GridField to_grid(const SpectralField& f) {
  if (!f.geom) throw std::invalid_argument("field without geometry");
  if (f.coeffs.size() != f.geom->mode_count())
    throw std::invalid_argument("spectral field size mismatch");
  GridField out{f.geom, std::vector<double>(f.geom->node_count())};
  f.geom->to_grid(f.coeffs.data(), out.values.data());
  return out;
}

double integrate(const GridField& f) {
  return kernels::active().dot(f.geom->weights().data(), f.values.data(), f.values.size());
}

double spectral_tail_fraction(const SpectralField& u) {
  const Geometry& g = *u.geom;
  double total = 0.0, tail = 0.0;
  if (g.kind() == GeomKind::kZonalSphere) {
    const int cut = 2 * g.max_degree() / 3;
    for (int l = 1; l <= g.max_degree(); ++l) {
      const double e = u.coeffs[l] * u.coeffs[l];
      total += e;
      if (l > cut) tail += e;
    }
  } else {
    const double cut2 = std::pow(2.0 * g.max_frequency() / 3.0, 2);
    const auto& eig = g.laplace_eigenvalues();
    for (std::size_t m = 1; m < g.mode_count(); ++m) {
      const double e = u.coeffs[m] * u.coeffs[m];
      total += e;
      // |k|_inf is not stored; |k|^2 > n*cut^2 would be too lax, so use the
      // Euclidean proxy |k|^2 > cut^2 which brackets the top third.
      if (eig[m] > cut2) tail += e;
    }
  }
  if (total < 1e-300) return 0.0;
  return tail / total;
}

SpectralField random_state(std::shared_ptr<const Geometry> geom, unsigned long seed,
                           double sup_amplitude) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  SpectralField u{geom, std::vector<double>(geom->mode_count())};
  const auto& eig = geom->laplace_eigenvalues();
  for (std::size_t m = 0; m < u.coeffs.size(); ++m)
    u.coeffs[m] = gauss(rng) / std::pow(1.0 + eig[m], 1.5);
  GridField g = to_grid(u);
  const double sup = kernels::active().max_abs(g.values.data(), g.values.size());
  if (sup > 0.0)
    kernels::active().scale(u.coeffs.data(), sup_amplitude / sup, u.coeffs.data(),
                            u.coeffs.size());
  return u;
}

DilationMap dilation(std::shared_ptr<const Geometry> geom, Pole pole, double r) {
  if (geom->kind() != GeomKind::kZonalSphere)
    throw std::invalid_argument("dilations are defined on the zonal sphere only");
  if (!(r >= 1.0)) throw std::invalid_argument("dilation parameter must satisfy r >= 1");
  DilationMap map{geom, pole, r, std::vector<double>(geom->node_count(), 1.0)};
  if (r == 1.0) return map;
  const int n = geom->dim();
  for (std::size_t i = 0; i < geom->node_count(); ++i) {
    const double x = geom->node_coord(i, 0);
    const double xt = pole == Pole::kNorth ? x : -x;
    const double lam = 2.0 * r / ((1.0 + xt) + r * r * (1.0 - xt));
    map.jacobian[i] = std::pow(lam, n);
  }
  return map;
}

GridField compose_with_dilation(const GridField& u, const DilationMap& map) {
  if (!u.geom->same_as(*map.geom)) throw std::invalid_argument("geometry mismatch");
  if (map.r == 1.0) return u;
  const Geometry& g = *u.geom;
  const double r2 = map.r * map.r;
  SpectralField spec = to_spectral(u);
  GridField out{u.geom, std::vector<double>(g.node_count())};
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const double x = g.node_coord(i, 0);
    const double xt = map.pole == Pole::kNorth ? x : -x;
    const double den = (1.0 + xt) + r2 * (1.0 - xt);
    const double xt_mapped = ((1.0 + xt) - r2 * (1.0 - xt)) / den;
    const double x_mapped = map.pole == Pole::kNorth ? xt_mapped : -xt_mapped;
    out.values[i] = g.evaluate_zonal(spec.coeffs.data(), x_mapped);
  }
  return out;
}

GridField pullback(const GridField& u, const DilationMap& map) {
  if (!u.geom->same_as(*map.geom)) throw std::invalid_argument("geometry mismatch");
  if (map.r == 1.0) return u;
  const Geometry& g = *u.geom;
  const int n = g.dim();
  GridField out = compose_with_dilation(u, map);
  for (std::size_t i = 0; i < g.node_count(); ++i)
    out.values[i] += std::log(map.jacobian[i]) / static_cast<double>(n);
  return out;
}

std::vector<double> center_of_mass(const GridField& u) {
  const Geometry& g = *u.geom;
  const auto& k = kernels::active();
  const std::size_t N = g.node_count();
  std::vector<double> enu(N);
  k.exp_scale(u.values.data(), static_cast<double>(g.dim()), enu.data(), N);
  const double mass = k.dot(g.weights().data(), enu.data(), N);
  const int n_axes = g.kind() == GeomKind::kZonalSphere ? 1 : g.dim();
  std::vector<double> com(n_axes, 0.0);
  for (int a = 0; a < n_axes; ++a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < N; ++i) acc += g.weights()[i] * g.node_coord(i, a) * enu[i];
    com[a] = acc / mass;
  }
  return com;
}

}  // namespace qflow
