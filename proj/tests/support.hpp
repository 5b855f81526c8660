#pragma once

#include "dac/dac.hpp"

#include <vector>

namespace dac::testing {

/// Heat plant with sine input/output shapes, zero gain and a first-order filter.
inline PlantSpec sine_heat(double diffusivity = 0.4) {
    PlantSpec s;
    s.diffusivity = diffusivity;
    s.input_shape = {ShapeKind::sine, 1.0};
    s.output_shape = {ShapeKind::sine, 1.0};
    return s;
}

inline ClosedLoopSystem make_system(const PlantSpec& spec, int n, double gamma, std::vector<double> poles = {-20.0},
                                    double alpha_hat0 = 0.0) {
    ClosedLoopSystem sys;
    sys.plant = assemble_plant(spec, n);
    sys.real = design_K(sys.plant, GainStrategy::zero);
    sys.filter = build_filter(poles, 0.0, sys.real, sys.plant);
    sys.cert = certify(sys.real.Am, sys.plant.space.weights(), n);
    sys.proj = {spec.nu_alpha, 0.1, gamma};
    sys.alpha_hat0 = Vector::Constant(sys.plant.channels(), alpha_hat0);
    return sys;
}

inline SimOptions constant_reference(double amplitude, double dt, double horizon) {
    SimOptions o;
    o.dt = dt;
    o.horizon = horizon;
    o.reference = {ReferenceKind::constant, amplitude};
    return o;
}

}  // namespace dac::testing
