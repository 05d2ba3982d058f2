#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qzo {

// Round-to-nearest, ties away from zero. The single rounding policy used
// everywhere (quantization, requantization, parameter updates).
int64_t round_half_away(double v);

// Integer tensor with a floating-point scale. Values are stored as int32
// regardless of bitwidth so that transient perturbations may leave the
// nominal range without wrapping.
struct QTensor {
    std::vector<int32_t> data;
    std::vector<int> shape;
    float scale = 1.0f;
    int bitwidth = 8;  // 8 or 32
    bool is_signed = true;

    int64_t size() const { return static_cast<int64_t>(data.size()); }

    // Clip bounds: signed b-bit covers [-2^(b-1), 2^(b-1)-1],
    // unsigned covers [0, 2^b - 1].
    int64_t qmin() const;
    int64_t qmax() const;

    bool same_layout(const QTensor& other) const {
        return shape == other.shape && bitwidth == other.bitwidth &&
               is_signed == other.is_signed;
    }
};

int64_t shape_elems(const std::vector<int>& shape);

// Validates range/scale/shape invariants; throws std::invalid_argument.
void validate(const QTensor& t, const std::string& what);

// clip(round(x_i / scale), qmin, qmax) per element.
QTensor quantize(const std::vector<float>& x, const std::vector<int>& shape,
                 float scale, int bitwidth, bool is_signed);

std::vector<float> dequantize(const QTensor& t);

}  // namespace qzo
