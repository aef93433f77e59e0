#pragma once

#include <cstddef>
#include <sstream>
#include <vector>

#include "hmf/errors.hpp"

namespace hmf::model {

class ShapeError : public DataError {
public:
    using DataError::DataError;
};

// Dense NHWC tensor of doubles. Flat vectors are carried as (N,1,1,C).
struct Tensor {
    int n = 0, h = 0, w = 0, c = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int n_, int h_, int w_, int c_)
        : n(n_), h(h_), w(w_), c(c_),
          v(static_cast<std::size_t>(n_) * h_ * w_ * c_, 0.0) {}

    std::size_t size() const { return v.size(); }

    double& at(int in, int ih, int iw, int ic) {
        return v[((static_cast<std::size_t>(in) * h + ih) * w + iw) * c + ic];
    }
    double at(int in, int ih, int iw, int ic) const {
        return v[((static_cast<std::size_t>(in) * h + ih) * w + iw) * c + ic];
    }
    double* row(int in, int ih, int iw) {
        return &v[((static_cast<std::size_t>(in) * h + ih) * w + iw) * c];
    }
    const double* row(int in, int ih, int iw) const {
        return &v[((static_cast<std::size_t>(in) * h + ih) * w + iw) * c];
    }

    std::string shape_str() const {
        std::ostringstream s;
        s << "(" << n << "," << h << "," << w << "," << c << ")";
        return s.str();
    }
};

} // namespace hmf::model
