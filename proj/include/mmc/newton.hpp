#pragma once

#include <Eigen/Dense>
#include <sstream>

#include "mmc/core.hpp"

namespace mmc {

struct NewtonOptions {
    double tol = 1e-10;   // on the residual 2-norm
    int max_iter = 50;
    int max_halvings = 12;
};

struct NewtonReport {
    int iterations = 0;
    double residual_norm = 0.0;
};

// Damped Newton on a fixed-size system. The functor fills F(x) and the
// analytic Jacobian J(x); the step is halved while the residual norm grows.
template <int N, typename Fn>
NewtonReport newton_solve(Eigen::Matrix<double, N, 1>& x, Fn&& fn,
                          const NewtonOptions& opts = {}) {
    using Vec = Eigen::Matrix<double, N, 1>;
    using Mat = Eigen::Matrix<double, N, N>;
    Vec f;
    Mat j;
    fn(x, f, &j);
    double fnorm = f.norm();
    for (int it = 1; it <= opts.max_iter; ++it) {
        if (fnorm < opts.tol) return {it - 1, fnorm};
        Eigen::FullPivLU<Mat> lu(j);
        if (!lu.isInvertible()) {
            std::ostringstream os;
            os << "newton: singular Jacobian at iteration " << it << ", |F| = " << fnorm
               << ", x = [" << x.transpose() << "]";
            throw SolverFailure(os.str());
        }
        Vec dx = lu.solve(-f);
        double lambda = 1.0;
        Vec x_new;
        Vec f_new;
        double fnorm_new = fnorm;
        for (int h = 0; h <= opts.max_halvings; ++h) {
            x_new = x + lambda * dx;
            fn(x_new, f_new, static_cast<Mat*>(nullptr));
            fnorm_new = f_new.norm();
            if (fnorm_new <= fnorm || fnorm_new < opts.tol) break;
            lambda *= 0.5;
        }
        x = x_new;
        fnorm = fnorm_new;
        fn(x, f, &j);
        fnorm = f.norm();
    }
    if (fnorm < opts.tol) return {opts.max_iter, fnorm};
    std::ostringstream os;
    os << "newton: no convergence after " << opts.max_iter << " iterations, |F| = " << fnorm
       << ", x = [" << x.transpose() << "]";
    throw SolverFailure(os.str());
}

}  // namespace mmc
