#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace qflow {

enum class GeomKind { kTorus, kZonalSphere };
enum class Pole { kNorth, kSouth };

/// A discretized model space: the flat torus [0,2pi)^n on a uniform tensor
/// grid, or the round sphere S^n restricted to zonal (axially symmetric)
/// functions on a Gauss-Jacobi grid in x = cos(theta). The geometry owns the
/// quadrature rule, the orthonormal spectral basis, and the grid<->spectral
/// transform pair. Instances are immutable after construction and safe to
/// share across threads; transforms use per-call scratch only.
///
/// Spectral conventions:
///  - Torus: real orthonormal Fourier basis. Mode 0 is the constant 1/sqrt(V);
///    each frequency vector k (first nonzero component positive, |k_i| <=
///    max_frequency()) contributes a cosine mode sqrt(2/V) cos(k.x) followed
///    by a sine mode sqrt(2/V) sin(k.x). Frequencies at or above the Nyquist
///    row are outside the band.
///  - Zonal sphere: normalized Gegenbauer polynomials q_l(cos theta) for the
///    measure omega_{n-1} (1-x^2)^{(n-2)/2} dx, l = 0..max_degree(). These are
///    the zonal spherical harmonics; the node set has 2(L+1) points so that
///    quadrature is exact well past degree 2L.
class Geometry {
 public:
  static std::shared_ptr<const Geometry> make(GeomKind kind, int n, int resolution);
  ~Geometry();

  Geometry(const Geometry&) = delete;
  Geometry& operator=(const Geometry&) = delete;

  GeomKind kind() const { return kind_; }
  int dim() const { return dim_; }
  int resolution() const { return resolution_; }
  std::size_t node_count() const { return weights_.size(); }
  std::size_t mode_count() const { return laplace_eigs_.size(); }
  double volume() const { return volume_; }
  const std::vector<double>& weights() const { return weights_; }

  /// Torus: angle of node i along `axis`. Sphere: cos(theta) of node i
  /// (single axis, pass 0).
  double node_coord(std::size_t i, int axis) const;

  /// Torus band limit per axis (largest |k_i|); 0 for the sphere.
  int max_frequency() const { return max_freq_; }
  /// Sphere maximum polynomial degree L; 0 for the torus.
  int max_degree() const { return max_degree_; }

  /// Eigenvalue of -Laplace per mode: |k|^2 on the torus, l(l+n-1) on the
  /// sphere (repeated for cos/sin pairs on the torus).
  const std::vector<double>& laplace_eigenvalues() const { return laplace_eigs_; }

  /// Human-readable mode tag for exports: "const", "cos(1,0)", "l=3", ...
  std::string mode_label(std::size_t m) const;

  /// Flat mode index lookups.
  std::size_t sphere_mode(int l) const;
  std::size_t torus_mode(const std::vector<int>& k, bool sine) const;
  /// Frequency vector of a nonconstant torus mode (throws on the sphere).
  const std::vector<int>& mode_frequency(std::size_t m) const;

  // Transform pair. grid has node_count() entries, spec mode_count().
  void to_spectral(const double* grid, double* spec) const;
  void to_grid(const double* spec, double* grid) const;

  // Dealiased evaluation path for nonlinear terms: a 2x-per-axis grid on the
  // torus; the regular (already oversampled) grid on the sphere.
  std::size_t fine_node_count() const;
  const std::vector<double>& fine_weights() const;
  void to_fine_grid(const double* spec, double* fine) const;
  void fine_to_spectral(const double* fine, double* spec) const;

  /// Evaluate a zonal spectral expansion at an arbitrary x = cos(theta).
  double evaluate_zonal(const double* spec, double x) const;

  bool same_as(const Geometry& other) const {
    return kind_ == other.kind_ && dim_ == other.dim_ && resolution_ == other.resolution_;
  }

  /// Documented key-value descriptor block ("kind = ...\nn = ...\n...").
  std::string descriptor() const;

 private:
  Geometry() = default;
  void init_torus();
  void init_sphere();

  GeomKind kind_ = GeomKind::kTorus;
  int dim_ = 0;
  int resolution_ = 0;
  int max_freq_ = 0;
  int max_degree_ = 0;
  double volume_ = 0.0;
  std::vector<double> weights_;
  std::vector<double> laplace_eigs_;

  // Torus state: half-space frequency list and FFT index maps for the coarse
  // and fine grids.
  std::vector<std::vector<int>> freqs_;
  std::vector<std::size_t> fft_pos_, fft_neg_;
  std::vector<std::size_t> fft_fine_pos_, fft_fine_neg_;
  std::vector<double> fine_weights_;
  void* plan_fwd_ = nullptr;
  void* plan_bwd_ = nullptr;
  void* plan_fine_fwd_ = nullptr;
  void* plan_fine_bwd_ = nullptr;

  // Sphere state: nodes in x, basis values B[node][l] and recurrence data.
  std::vector<double> nodes_x_;
  std::vector<double> basis_;      // node-major, (L+1) per node
  std::vector<double> basis_wT_;   // mode-major, premultiplied by weights
  std::vector<double> recur_b_;    // orthonormal recurrence offdiagonals
  double basis_p0_ = 0.0;
};

/// Pointwise samples of a function, one value per quadrature node.
struct GridField {
  std::shared_ptr<const Geometry> geom;
  std::vector<double> values;
};

/// Coefficients in the geometry's orthonormal basis.
struct SpectralField {
  std::shared_ptr<const Geometry> geom;
  std::vector<double> coeffs;
};

GridField make_grid(std::shared_ptr<const Geometry> geom,
                    const std::function<double(const double*)>& f);
GridField zero_grid(std::shared_ptr<const Geometry> geom);
SpectralField zero_spectral(std::shared_ptr<const Geometry> geom);

SpectralField to_spectral(const GridField& f);
GridField to_grid(const SpectralField& f);

/// Quadrature sum  sum_i w_i f_i.
double integrate(const GridField& f);

/// Energy fraction carried by the top third of the spectral band, constant
/// mode excluded. A resolution diagnostic: exact dealiasing is impossible for
/// exponentials, so runs report this instead.
double spectral_tail_fraction(const SpectralField& u);

/// Band-limited pseudo-random state with smoothly decaying spectrum, scaled
/// to the requested sup norm. Deterministic in the seed.
SpectralField random_state(std::shared_ptr<const Geometry> geom, unsigned long seed,
                           double sup_amplitude);

/// Conformal dilation of the zonal sphere about a pole, r >= 1. Stereographic
/// convention: projecting from the antipode of `pole`, the map is t -> r t, so
/// the Jacobian determinant at the pole itself equals r^n and the pulled-back
/// volume concentrates at `pole` as r grows. The convention is an assumption
/// (there is no canonical normalization); it is pinned down here by the
/// volume-invariance and group-law checks.
struct DilationMap {
  std::shared_ptr<const Geometry> geom;
  Pole pole = Pole::kNorth;
  double r = 1.0;
  std::vector<double> jacobian;  // det(d phi) per node
};

DilationMap dilation(std::shared_ptr<const Geometry> geom, Pole pole, double r);

/// u o phi_{y,r} alone (band-limited evaluation at the mapped nodes).
GridField compose_with_dilation(const GridField& u, const DilationMap& map);

/// w = u o phi_{y,r} + (1/n) log det(d phi_{y,r}).
GridField pullback(const GridField& u, const DilationMap& map);

/// Per-axis (int x_i e^{n u} dmu) / (int e^{n u} dmu); on the zonal sphere a
/// single component along the symmetry axis.
std::vector<double> center_of_mass(const GridField& u);

}  // namespace qflow
