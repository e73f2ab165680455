#pragma once

// Central finite-difference gradient oracle. Independent of the tape: it only
// re-evaluates a loss closure under coordinate perturbations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "navgen/autograd.hpp"
#include "navgen/rng.hpp"
#include "navgen/tensor.hpp"

namespace fd {

struct Report {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

inline double central_diff(const std::function<double()>& loss, navgen::Tensor& theta, std::size_t i,
                           double h) {
    const double orig = theta[i];
    theta[i] = orig + h;
    const double lp = loss();
    theta[i] = orig - h;
    const double lm = loss();
    theta[i] = orig;
    return (lp - lm) / (2.0 * h);
}

// Compares analytic gradients (already accumulated in `param.grad()`) against
// central differences on up to `max_coords` coordinates.
inline Report check_param(const std::function<double()>& loss, navgen::ag::Var param,
                          std::size_t max_coords = 24, std::uint64_t coord_seed = 7) {
    Report rep;
    navgen::Tensor& theta = param.value_mut();
    const navgen::Tensor& analytic = param.grad();
    std::vector<std::size_t> coords(theta.size());
    for (std::size_t i = 0; i < coords.size(); ++i) {
        coords[i] = i;
    }
    if (coords.size() > max_coords) {
        navgen::Rng rng(coord_seed);
        rng.shuffle(coords);
        coords.resize(max_coords);
    }
    for (std::size_t i : coords) {
        const double h = 1e-5 * std::max(1.0, std::abs(theta[i]));
        const double g_fd = central_diff(loss, theta, i, h);
        const double g_an = analytic.size() == theta.size() ? analytic[i] : 0.0;
        const double denom = std::max(std::abs(g_fd), std::abs(g_an));
        if (denom < 1e-8) {
            continue;  // both effectively zero
        }
        rep.max_rel_err = std::max(rep.max_rel_err, std::abs(g_fd - g_an) / denom);
        ++rep.checked;
    }
    return rep;
}

}  // namespace fd
