#pragma once

// Static per-layer memory estimate for every convolution: weight bytes W,
// input-activation bytes X, and pooled payload bytes Z(k) for each requested
// kernel, computed from shape inference alone.

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "cabp/compression.hpp"
#include "cabp/ledger.hpp"
#include "cabp/model.hpp"

namespace cabp {

struct LayerMemoryRow {
  std::string layer;
  std::uint64_t w_bytes = 0;
  std::uint64_t x_bytes = 0;
  std::vector<std::uint64_t> z_bytes;  // one per requested kernel
};

struct MemoryTable {
  std::vector<PoolKernel> kernels;
  std::vector<LayerMemoryRow> rows;

  LayerMemoryRow sum() const {
    LayerMemoryRow s{"Sum", 0, 0, std::vector<std::uint64_t>(kernels.size(), 0)};
    for (const auto& r : rows) {
      s.w_bytes += r.w_bytes;
      s.x_bytes += r.x_bytes;
      for (std::size_t i = 0; i < kernels.size(); ++i) s.z_bytes[i] += r.z_bytes[i];
    }
    return s;
  }

  const LayerMemoryRow& row(const std::string& layer) const {
    for (const auto& r : rows) {
      if (r.layer == layer) return r;
    }
    throw ShapeError("memory table: no layer " + layer);
  }
};

inline MemoryTable static_model(const std::vector<ConvLayerInfo>& convs, std::size_t element_size,
                                const std::vector<PoolKernel>& kernels) {
  MemoryTable t{kernels, {}};
  for (const auto& c : convs) {
    if (c.input_shape.size() != 4) throw ShapeError("static model: unresolved input shape for " + c.name);
    LayerMemoryRow r{c.name, shape_numel(c.spec.weight_shape()) * element_size,
                     shape_numel(c.input_shape) * element_size, {}};
    for (const auto& k : kernels) r.z_bytes.push_back(compressed_bytes(c.input_shape, k, element_size));
    t.rows.push_back(std::move(r));
  }
  return t;
}

inline MemoryTable static_model(const ResNetConfig& arch, std::size_t batch, DType dtype,
                                const std::vector<PoolKernel>& kernels) {
  return static_model(describe_convs(arch, batch), dtype_size(dtype), kernels);
}

inline std::string kernel_column(const PoolKernel& k) {
  return "z" + (k.kh == k.kw ? std::to_string(k.kh) : k.str()) + "_mib";
}

/// layer,w_mib,x_mib,<z columns> with a trailing Sum row.
inline void write_memory_table(std::ostream& os, const MemoryTable& t) {
  os << "layer,w_mib,x_mib";
  for (const auto& k : t.kernels) os << ',' << kernel_column(k);
  os << '\n';
  auto mib = [](std::uint64_t b) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", static_cast<double>(b) / kMiB);
    return std::string(buf);
  };
  auto emit = [&](const LayerMemoryRow& r) {
    os << r.layer << ',' << mib(r.w_bytes) << ',' << mib(r.x_bytes);
    for (auto z : r.z_bytes) os << ',' << mib(z);
    os << '\n';
  };
  for (const auto& r : t.rows) emit(r);
  emit(t.sum());
}

}  // namespace cabp
