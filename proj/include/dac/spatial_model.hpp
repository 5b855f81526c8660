#pragma once

#include "dac/error.hpp"
#include "dac/linalg.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace dac {

/// Uniform interior grid on [0, L] with Dirichlet ends.
///
/// Nodes are x_j = j L / (N + 1), j = 1..N. The quadrature is the composite
/// trapezoid rule on the full grid including the two (zero-valued) boundary
/// nodes; the boundary half-cells are folded into the first and last interior
/// weights so that the weights integrate constants exactly.
struct SpatialGrid {
    double length = 0.0;
    int n = 0;
    Vector nodes;
    Vector weights;

    double spacing() const { return length / (n + 1); }
};

inline SpatialGrid build_grid(double length, int n) {
    if (!(length > 0.0) || !std::isfinite(length))
        throw ConfigError("spatial_model", "grid length must be positive, got " + std::to_string(length));
    if (n < 4)
        throw ConfigError("spatial_model", "grid needs at least 4 interior nodes, got " + std::to_string(n));
    SpatialGrid g;
    g.length = length;
    g.n = n;
    const double h = length / (n + 1);
    g.nodes.resize(n);
    g.weights = Vector::Constant(n, h);
    for (int j = 0; j < n; ++j) g.nodes(j) = (j + 1) * h;
    g.weights(0) += 0.5 * h;
    g.weights(n - 1) += 0.5 * h;
    return g;
}

/// Diagonal Z-space metric for a state made of `channels` stacked copies of
/// a nodal field: state index = channel * nodes + node.
class ZSpace {
public:
    ZSpace() = default;
    explicit ZSpace(Vector weights, int channels = 1) : weights_(std::move(weights)), channels_(channels) {}

    static ZSpace from_grid(const SpatialGrid& grid, int channels) {
        return ZSpace(grid.weights.replicate(channels, 1), channels);
    }

    int dim() const { return static_cast<int>(weights_.size()); }
    int channels() const { return channels_; }
    int nodes() const { return channels_ > 0 ? dim() / channels_ : 0; }
    const Vector& weights() const { return weights_; }
    Matrix mass() const { return weights_.asDiagonal(); }

    double inner(const Vector& a, const Vector& b) const {
        if (a.size() != weights_.size() || b.size() != weights_.size())
            throw ConfigError("spatial_model", "z_inner dimension mismatch");
        return (a.array() * weights_.array() * b.array()).sum();
    }
    double norm(const Vector& a) const { return std::sqrt(std::max(0.0, inner(a, a))); }

private:
    Vector weights_;
    int channels_ = 1;
};

/// Quadrature approximation of <a, b>_Z summed over channels.
inline double z_inner(const SpatialGrid& grid, const Vector& a, const Vector& b) {
    if (a.size() != b.size() || a.size() == 0 || a.size() % grid.n != 0)
        throw ConfigError("spatial_model", "z_inner dimension mismatch: " + std::to_string(a.size()) +
                                               " vs " + std::to_string(b.size()) + " on N=" +
                                               std::to_string(grid.n));
    const int channels = static_cast<int>(a.size() / grid.n);
    return ZSpace::from_grid(grid, channels).inner(a, b);
}

// ---------------------------------------------------------------------------
// Nonlinearity catalog

enum class NonlinearityKind { zero, sine, rational };

/// Pointwise scalar map g; the spatial field is f(w)(x) = g(w̄(x)) where w̄
/// is the channel average of the state at x.
struct Nonlinearity {
    NonlinearityKind kind = NonlinearityKind::sine;

    double value(double s) const {
        switch (kind) {
            case NonlinearityKind::zero: return 0.0;
            case NonlinearityKind::sine: return std::sin(s);
            case NonlinearityKind::rational: return s / (1.0 + s * s);
        }
        return 0.0;
    }

    std::string name() const {
        switch (kind) {
            case NonlinearityKind::zero: return "zero";
            case NonlinearityKind::sine: return "sin";
            case NonlinearityKind::rational: return "rational";
        }
        return "?";
    }
};

inline std::optional<NonlinearityKind> parse_nonlinearity(const std::string& s) {
    if (s == "zero") return NonlinearityKind::zero;
    if (s == "sin") return NonlinearityKind::sine;
    if (s == "rational") return NonlinearityKind::rational;
    return std::nullopt;
}

/// Evaluates the scalar field f(w) at every node.
inline Vector eval_nonlinearity(const Nonlinearity& f, const Vector& w, int channels = 1) {
    if (!w.allFinite()) throw SimulationError("spatial_model", "non-finite state passed to nonlinearity");
    if (channels < 1 || w.size() % channels != 0)
        throw ConfigError("spatial_model", "state size is not a multiple of the channel count");
    const Eigen::Index nodes = w.size() / channels;
    Vector field(nodes);
    for (Eigen::Index j = 0; j < nodes; ++j) {
        double mean = 0.0;
        for (int c = 0; c < channels; ++c) mean += w(c * nodes + j);
        field(j) = f.value(mean / channels);
    }
    return field;
}

/// Channelwise forcing (coeffs f)_i(x) = coeffs_i * f(x).
inline Vector channel_forcing(const Vector& coeffs, const Vector& field) {
    const Eigen::Index nodes = field.size();
    Vector out(coeffs.size() * nodes);
    for (Eigen::Index i = 0; i < coeffs.size(); ++i) out.segment(i * nodes, nodes) = coeffs(i) * field;
    return out;
}

// ---------------------------------------------------------------------------
// Plant catalog

enum class ShapeKind { zero, uniform, sine, bump };

/// Spatial profile used for input influence, output weight and initial data.
/// `center` and `width` are fractions of the domain length.
struct Shape {
    ShapeKind kind = ShapeKind::zero;
    double amplitude = 1.0;
    double center = 0.5;
    double width = 0.2;

    double at(double x, double length) const {
        switch (kind) {
            case ShapeKind::zero: return 0.0;
            case ShapeKind::uniform: return amplitude;
            case ShapeKind::sine: return amplitude * std::sin(std::numbers::pi * x / length);
            case ShapeKind::bump: {
                const double u = (x / length - center) / width;
                if (std::abs(u) >= 0.5) return 0.0;
                const double c = std::cos(std::numbers::pi * u);
                return amplitude * c * c;
            }
        }
        return 0.0;
    }

    Vector sample(const SpatialGrid& g) const {
        Vector v(g.n);
        for (int j = 0; j < g.n; ++j) v(j) = at(g.nodes(j), g.length);
        return v;
    }
};

enum class PlantKind { heat, advection_diffusion, spr_heat, matrix };

inline std::string to_string(PlantKind k) {
    switch (k) {
        case PlantKind::heat: return "heat";
        case PlantKind::advection_diffusion: return "advection_diffusion";
        case PlantKind::spr_heat: return "spr_heat";
        case PlantKind::matrix: return "matrix";
    }
    return "?";
}

inline std::optional<PlantKind> parse_plant_kind(const std::string& s) {
    if (s == "heat") return PlantKind::heat;
    if (s == "advection_diffusion") return PlantKind::advection_diffusion;
    if (s == "spr_heat") return PlantKind::spr_heat;
    if (s == "matrix") return PlantKind::matrix;
    return std::nullopt;
}

/// Catalog entry: which plant, and its physical parameters.
struct PlantSpec {
    PlantKind kind = PlantKind::heat;
    double length = 1.0;
    double diffusivity = 1.0;  // heat: A = diffusivity * d2/dx2
    double velocity = 1.0;     // advection-diffusion: A = -velocity d/dx + viscosity d2/dx2
    double viscosity = 0.01;
    int channels = 1;
    Shape input_shape{ShapeKind::bump, 1.0, 0.3, 0.3};
    Shape output_shape{ShapeKind::bump, 1.0, 0.6, 0.3};
    Shape initial_state{};
    Nonlinearity nonlinearity{};
    std::vector<double> alpha_true{0.8};
    double nu_alpha = 1.0;
    double rho0 = 1.0;

    // User matrix plant (kind == matrix). Mass defaults to the identity.
    Matrix a;
    Vector b;
    RowVector c;
    Vector mass;
    Vector w0;
};

struct PlantModel {
    PlantKind kind = PlantKind::heat;
    std::optional<SpatialGrid> grid;
    ZSpace space;
    Matrix A;
    Vector B;
    RowVector C;
    Nonlinearity f;
    Vector alpha_true;
    double nu_alpha = 1.0;
    double rho0 = 1.0;
    Vector w0;
    double b_norm = 0.0;  // ||B||_{L(R,Z)}
    double c_norm = 0.0;  // ||C||_{L(Z,R)}

    int state_dim() const { return static_cast<int>(A.rows()); }
    int channels() const { return space.channels(); }
    double length() const { return grid ? grid->length : 1.0; }

    /// Rejects parameter sets outside the admissible class.
    void validate() const {
        const int m = state_dim();
        if (A.cols() != m || B.size() != m || C.size() != m || space.dim() != m || w0.size() != m)
            throw ConfigError("spatial_model", "plant operator dimensions do not conform");
        if ((space.weights().array() <= 0.0).any())
            throw ConfigError("spatial_model", "mass weights must be positive");
        if (!(nu_alpha > 0.0)) throw ConfigError("spatial_model", "nu_alpha must be positive");
        if (!(rho0 > 0.0)) throw ConfigError("spatial_model", "rho0 must be positive");
        if (alpha_true.size() != channels())
            throw ConfigError("spatial_model", "alpha_true must have one entry per channel");
        for (Eigen::Index i = 0; i < alpha_true.size(); ++i)
            if (!(std::abs(alpha_true(i)) < nu_alpha))
                throw ConfigError("spatial_model", "|alpha_true[" + std::to_string(i) +
                                                       "]| must be below nu_alpha");
        if (!(space.norm(w0) < rho0))
            throw ConfigError("spatial_model", "initial state norm must be below rho0");
        if (!std::isfinite(c_norm)) throw ConfigError("spatial_model", "output operator is unbounded");
    }
};

namespace detail {

inline Matrix second_difference(int n, double h) {
    Matrix d = Matrix::Zero(n, n);
    const double s = 1.0 / (h * h);
    for (int j = 0; j < n; ++j) {
        d(j, j) = -2.0 * s;
        if (j > 0) d(j, j - 1) = s;
        if (j + 1 < n) d(j, j + 1) = s;
    }
    return d;
}

// First-order upwind for -velocity * d/dx, upwinded against the flow direction.
inline Matrix upwind_advection(int n, double h, double velocity) {
    Matrix d = Matrix::Zero(n, n);
    const double s = velocity / h;
    for (int j = 0; j < n; ++j) {
        if (velocity >= 0.0) {
            d(j, j) = -s;
            if (j > 0) d(j, j - 1) = s;
        } else {
            d(j, j) = s;
            if (j + 1 < n) d(j, j + 1) = -s;
        }
    }
    return d;
}

inline Matrix block_diagonal(const Matrix& block, int copies) {
    const Eigen::Index n = block.rows();
    Matrix out = Matrix::Zero(n * copies, n * copies);
    for (int c = 0; c < copies; ++c) out.block(c * n, c * n, n, n) = block;
    return out;
}

}  // namespace detail

/// Discretizes a catalog plant on `grid`. Input and output act on channel 0.
inline PlantModel assemble_plant(const PlantSpec& spec, const SpatialGrid& grid) {
    PlantModel p;
    p.kind = spec.kind;
    p.f = spec.nonlinearity;
    p.nu_alpha = spec.nu_alpha;
    p.rho0 = spec.rho0;
    p.alpha_true = Eigen::Map<const Vector>(spec.alpha_true.data(), static_cast<Eigen::Index>(spec.alpha_true.size()));

    if (spec.kind == PlantKind::matrix) {
        const Eigen::Index m = spec.a.rows();
        if (spec.a.cols() != m || spec.b.size() != m || spec.c.size() != m)
            throw ConfigError("spatial_model", "matrix plant needs square A and conforming B, C");
        p.A = spec.a;
        p.B = spec.b;
        p.C = spec.c;
        p.space = ZSpace(spec.mass.size() == m ? spec.mass : Vector::Ones(m), spec.channels);
        p.w0 = spec.w0.size() == m ? spec.w0 : Vector::Zero(m);
        p.b_norm = p.space.norm(p.B);
        // ||C||: sup |c.z| / ||z||_Z = ||W^{-1/2} c^T||_2.
        p.c_norm = (p.C.transpose().array() / p.space.weights().array().sqrt()).matrix().norm();
        p.validate();
        return p;
    }

    if (spec.channels < 1) throw ConfigError("spatial_model", "channels must be at least 1");
    if (std::abs(spec.length - grid.length) > 1e-12 * spec.length)
        throw ConfigError("spatial_model", "grid length does not match plant length");
    const int n = grid.n;
    const double h = grid.spacing();
    Matrix a1;
    switch (spec.kind) {
        case PlantKind::heat:
        case PlantKind::spr_heat:
            if (!(spec.diffusivity > 0.0)) throw ConfigError("spatial_model", "diffusivity must be positive");
            a1 = spec.diffusivity * detail::second_difference(n, h);
            break;
        case PlantKind::advection_diffusion:
            if (!(spec.viscosity > 0.0)) throw ConfigError("spatial_model", "viscosity must be positive");
            a1 = detail::upwind_advection(n, h, spec.velocity) + spec.viscosity * detail::second_difference(n, h);
            break;
        case PlantKind::matrix: break;
    }
    p.grid = grid;
    p.space = ZSpace::from_grid(grid, spec.channels);
    p.A = detail::block_diagonal(a1, spec.channels);

    const int m = n * spec.channels;
    const Vector b_shape = spec.input_shape.sample(grid);
    // The SPR benchmark is collocated: the output weight is the input shape.
    const Vector c_shape = spec.kind == PlantKind::spr_heat ? b_shape : spec.output_shape.sample(grid);
    p.B = Vector::Zero(m);
    p.B.head(n) = b_shape;
    p.C = RowVector::Zero(m);
    p.C.head(n) = (c_shape.array() * grid.weights.array()).matrix().transpose();
    p.b_norm = std::sqrt((b_shape.array().square() * grid.weights.array()).sum());
    p.c_norm = std::sqrt((c_shape.array().square() * grid.weights.array()).sum());

    const Vector w0_shape = spec.initial_state.sample(grid);
    p.w0 = w0_shape.replicate(spec.channels, 1);
    p.validate();
    return p;
}

inline PlantModel assemble_plant(const PlantSpec& spec, int n) {
    if (spec.kind == PlantKind::matrix) return assemble_plant(spec, SpatialGrid{});
    return assemble_plant(spec, build_grid(spec.length, n));
}

}  // namespace dac
