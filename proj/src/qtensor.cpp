#include "qzo/qtensor.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace qzo {

int64_t round_half_away(double v) {
    return std::llround(v);
}

static void check_bitwidth(int bitwidth) {
    if (bitwidth != 8 && bitwidth != 32) {
        throw std::invalid_argument("unsupported bitwidth " + std::to_string(bitwidth));
    }
}

int64_t QTensor::qmin() const {
    if (!is_signed) return 0;
    return -(int64_t{1} << (bitwidth - 1));
}

int64_t QTensor::qmax() const {
    if (!is_signed) return (int64_t{1} << bitwidth) - 1;
    return (int64_t{1} << (bitwidth - 1)) - 1;
}

int64_t shape_elems(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

void validate(const QTensor& t, const std::string& what) {
    check_bitwidth(t.bitwidth);
    if (!(t.scale > 0.0f) || !std::isfinite(t.scale)) {
        throw std::invalid_argument(what + ": scale must be positive and finite");
    }
    if (shape_elems(t.shape) != t.size()) {
        throw std::invalid_argument(what + ": shape does not match data length");
    }
    const int64_t lo = t.qmin(), hi = t.qmax();
    for (size_t i = 0; i < t.data.size(); ++i) {
        if (t.data[i] < lo || t.data[i] > hi) {
            throw std::invalid_argument(what + ": element " + std::to_string(i) +
                                        " out of range");
        }
    }
}

QTensor quantize(const std::vector<float>& x, const std::vector<int>& shape,
                 float scale, int bitwidth, bool is_signed) {
    check_bitwidth(bitwidth);
    if (!(scale > 0.0f) || !std::isfinite(scale)) {
        throw std::invalid_argument("quantize: scale must be positive and finite");
    }
    if (shape_elems(shape) != static_cast<int64_t>(x.size())) {
        throw std::invalid_argument("quantize: shape does not match input length");
    }
    QTensor t;
    t.shape = shape;
    t.scale = scale;
    t.bitwidth = bitwidth;
    t.is_signed = is_signed;
    t.data.resize(x.size());
    const int64_t lo = t.qmin(), hi = t.qmax();
    for (size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i])) {
            throw std::invalid_argument("quantize: non-finite input at element " +
                                        std::to_string(i));
        }
        int64_t q = round_half_away(static_cast<double>(x[i]) / scale);
        if (q < lo) q = lo;
        if (q > hi) q = hi;
        t.data[i] = static_cast<int32_t>(q);
    }
    return t;
}

std::vector<float> dequantize(const QTensor& t) {
    std::vector<float> out(t.data.size());
    for (size_t i = 0; i < t.data.size(); ++i) {
        out[i] = t.scale * static_cast<float>(t.data[i]);
    }
    return out;
}

}  // namespace qzo
