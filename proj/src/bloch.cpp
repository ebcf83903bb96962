#include "topo/bloch.hpp"

#include <fftw3.h>

#include <mutex>

#include "topo/spectral.hpp"

namespace topo {

namespace {

// Planning in FFTW is not thread-safe; execution with new arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n) : data(fftw_alloc_complex(n)) {
    if (!data) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(data); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  fftw_complex* data;
};

}  // namespace

struct BlochOperator::Plans {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
  // Entry (r, k) of the symbol and of its adjoint as arrays over momenta.
  std::vector<CVector> entries;
  std::vector<CVector> adjoint_entries;
};

CMatrix bloch_hamiltonian(const HoppingSpec& spec, const std::vector<double>& k) {
  spec.validate();
  if (static_cast<int>(k.size()) != spec.dimension) throw ConfigError("momentum has the wrong dimension");
  const int n = spec.fiber_dim;
  CMatrix h = CMatrix::Zero(n, n);
  for (const Hop& hop : spec.hops) {
    if (hop.constant.size() == 0) continue;
    double phase = 0.0;
    bool onsite = true;
    for (std::size_t i = 0; i < k.size(); ++i) {
      phase += k[i] * hop.displacement[i];
      onsite = onsite && hop.displacement[i] == 0;
    }
    if (onsite) {
      h += 0.5 * (hop.constant + hop.constant.adjoint());
    } else {
      const CMatrix t = std::polar(1.0, phase) * hop.constant;
      h += t + t.adjoint();
    }
  }
  return h;
}

std::vector<double> grid_momentum(const std::vector<int>& sides, std::size_t index) {
  std::vector<double> k(sides.size());
  for (std::size_t i = sides.size(); i-- > 0;) {
    const auto l = static_cast<std::size_t>(sides[i]);
    k[i] = 2.0 * kPi * static_cast<double>(index % l) / static_cast<double>(l);
    index /= l;
  }
  return k;
}

BlochOperator::BlochOperator(std::vector<int> sides, int fiber_dim, std::vector<CMatrix> symbol)
    : sides_(std::move(sides)), fiber_(fiber_dim), symbol_(std::move(symbol)), plans_(std::make_unique<Plans>()) {
  std::size_t volume = 1;
  for (int s : sides_) {
    if (s < 1) throw ConfigError("torus sides must be positive");
    volume *= static_cast<std::size_t>(s);
  }
  if (symbol_.size() != volume) throw ConfigError("Bloch symbol needs one matrix per momentum");
  for (const CMatrix& m : symbol_) {
    if (m.rows() != fiber_ || m.cols() != fiber_) throw ConfigError("Bloch symbol has the wrong fiber size");
  }
  size_ = static_cast<Eigen::Index>(volume) * fiber_;
  const auto f = static_cast<std::size_t>(fiber_);
  const auto v = static_cast<Eigen::Index>(volume);
  plans_->entries.assign(f * f, CVector(v));
  plans_->adjoint_entries.assign(f * f, CVector(v));
  for (Eigen::Index m = 0; m < v; ++m) {
    const CMatrix& a = symbol_[static_cast<std::size_t>(m)];
    for (int r = 0; r < fiber_; ++r)
      for (int k = 0; k < fiber_; ++k) {
        plans_->entries[static_cast<std::size_t>(r * fiber_ + k)](m) = a(r, k);
        plans_->adjoint_entries[static_cast<std::size_t>(r * fiber_ + k)](m) = std::conj(a(k, r));
      }
  }
  FftwBuffer scratch(static_cast<std::size_t>(size_));
  const int rank = static_cast<int>(sides_.size());
  std::lock_guard<std::mutex> lock(planner_mutex());
  // Fiber components are transformed as separate contiguous arrays.
  plans_->forward = fftw_plan_many_dft(rank, sides_.data(), fiber_, scratch.data, nullptr, 1, static_cast<int>(volume),
                                       scratch.data, nullptr, 1, static_cast<int>(volume), FFTW_FORWARD, FFTW_ESTIMATE);
  plans_->backward = fftw_plan_many_dft(rank, sides_.data(), fiber_, scratch.data, nullptr, 1, static_cast<int>(volume),
                                        scratch.data, nullptr, 1, static_cast<int>(volume), FFTW_BACKWARD, FFTW_ESTIMATE);
  if (!plans_->forward || !plans_->backward) throw NumericalError("FFTW planning failed");
}

BlochOperator::~BlochOperator() {
  if (!plans_) return;
  std::lock_guard<std::mutex> lock(planner_mutex());
  if (plans_->forward) fftw_destroy_plan(plans_->forward);
  if (plans_->backward) fftw_destroy_plan(plans_->backward);
}

CMatrix BlochOperator::apply(const CMatrix& block) const { return transform(block, false); }

CMatrix BlochOperator::apply_adjoint(const CMatrix& block) const { return transform(block, true); }

CMatrix BlochOperator::transform(const CMatrix& block, bool adjoint) const {
  if (block.rows() != size_) throw ConfigError("BlochOperator: block has the wrong number of rows");
  CMatrix out(size_, block.cols());
  const Eigen::Index v = size_ / fiber_;
  FftwBuffer in_buf(static_cast<std::size_t>(size_)), out_buf(static_cast<std::size_t>(size_));
  Eigen::Map<CMatrix> in(reinterpret_cast<Complex*>(in_buf.data), v, fiber_);
  Eigen::Map<CMatrix> res(reinterpret_cast<Complex*>(out_buf.data), v, fiber_);
  const double scale = 1.0 / static_cast<double>(v);
  const std::vector<CVector>& entries = adjoint ? plans_->adjoint_entries : plans_->entries;
  for (Eigen::Index c = 0; c < block.cols(); ++c) {
    // Column layout is site-major with the fiber fastest: a fiber x V matrix.
    in = Eigen::Map<const CMatrix>(block.col(c).data(), fiber_, v).transpose();
    fftw_execute_dft(plans_->forward, in_buf.data, in_buf.data);
    for (int r = 0; r < fiber_; ++r) {
      res.col(r) = entries[static_cast<std::size_t>(r * fiber_)].cwiseProduct(in.col(0));
      for (int k = 1; k < fiber_; ++k)
        res.col(r).array() += entries[static_cast<std::size_t>(r * fiber_ + k)].array() * in.col(k).array();
    }
    fftw_execute_dft(plans_->backward, out_buf.data, out_buf.data);
    Eigen::Map<CMatrix>(out.col(c).data(), fiber_, v) = scale * res.transpose();
  }
  return out;
}

CMatrix BlochOperator::dense() const { return apply(CMatrix::Identity(size_, size_)); }

std::unique_ptr<BlochOperator> bloch_operator(const HoppingSpec& spec, const std::vector<int>& sides) {
  if (static_cast<int>(sides.size()) != spec.dimension) throw ConfigError("torus has the wrong dimension");
  std::size_t volume = 1;
  for (int s : sides) volume *= static_cast<std::size_t>(s);
  std::vector<CMatrix> symbol(volume);
  for (std::size_t m = 0; m < volume; ++m) symbol[m] = bloch_hamiltonian(spec, grid_momentum(sides, m));
  return std::make_unique<BlochOperator>(sides, spec.fiber_dim, std::move(symbol));
}

std::unique_ptr<BlochOperator> bloch_flat_band_unitary(const HoppingSpec& spec, const std::vector<int>& sides) {
  if (!spec.chiral_symmetry) throw PreconditionError("flat-band unitary needs a chiral spec");
  if (static_cast<int>(sides.size()) != spec.dimension) throw ConfigError("torus has the wrong dimension");
  const ChiralGrading g = ChiralGrading::from(*spec.chiral_symmetry);
  std::size_t volume = 1;
  for (int s : sides) volume *= static_cast<std::size_t>(s);
  std::vector<CMatrix> symbol(volume);
  for (std::size_t m = 0; m < volume; ++m) {
    const CMatrix h = bloch_hamiltonian(spec, grid_momentum(sides, m));
    const CMatrix off = g.minus.adjoint() * h * g.plus;
    Eigen::SelfAdjointEigenSolver<CMatrix> es(off.adjoint() * off);
    if (es.eigenvalues().minCoeff() <= 1e-16 * std::max(1.0, es.eigenvalues().maxCoeff()))
      throw PreconditionError("flat-band unitary: gap closes on the momentum grid");
    symbol[m] = off * es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().cast<Complex>().asDiagonal() *
                es.eigenvectors().adjoint();
  }
  return std::make_unique<BlochOperator>(sides, static_cast<int>(g.plus.cols()), std::move(symbol));
}

}  // namespace topo
