// serialize.hpp
//
// Versioned textual parameter container. Shapes are written in the header of
// each tensor block; values are hexfloats, which round-trip doubles exactly.
//
//   milpdl-params v1
//   aggregator <plain|gated>
//   tensor proj.w0 <rows> <cols>
//   <one row of hexfloats per line>
//   tensor proj.b0 1 <n>
//   ...
//   tensor agg.w1 <D> 1
//   tensor agg.w2 <D> <L>
//   [tensor agg.u2 <D> <L>]
//   tensor cls.w 1 <L>
//   tensor cls.b 1 1
//   end

#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "milpdl/model.hpp"

namespace milpdl {

namespace detail {

inline void write_tensor(std::ostream& out, const std::string& name,
                         std::size_t rows, std::size_t cols,
                         const std::vector<double>& data) {
  out << "tensor " << name << ' ' << rows << ' ' << cols << '\n';
  char buf[40];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::snprintf(buf, sizeof(buf), "%a", data[r * cols + c]);
      if (c) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

struct TensorBlock {
  std::string name;
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;
};

inline TensorBlock read_tensor(std::istream& in, const std::string& expect_name) {
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("params: unexpected end of file before " + expect_name);
  std::istringstream head(line);
  std::string tag;
  TensorBlock block;
  head >> tag >> block.name >> block.rows >> block.cols;
  if (tag != "tensor" || head.fail())
    throw std::runtime_error("params: malformed tensor header: " + line);
  if (block.name != expect_name)
    throw std::runtime_error("params: expected tensor " + expect_name + ", found " +
                             block.name);
  block.data.resize(block.rows * block.cols);
  for (std::size_t r = 0; r < block.rows; ++r) {
    if (!std::getline(in, line))
      throw std::runtime_error("params: truncated tensor " + block.name);
    std::istringstream row(line);
    for (std::size_t c = 0; c < block.cols; ++c) {
      std::string tok;
      if (!(row >> tok))
        throw std::runtime_error("params: short row in tensor " + block.name);
      char* end = nullptr;
      block.data[r * block.cols + c] = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size())
        throw std::runtime_error("params: bad value in tensor " + block.name);
    }
  }
  return block;
}

}  // namespace detail

inline void save_params(const ModelParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write params file: " + path);
  out << "milpdl-params v1\n";
  out << "aggregator " << (p.aggregator.gated() ? "gated" : "plain") << '\n';
  out << "projector_layers " << p.projector.layers.size() << '\n';
  for (std::size_t i = 0; i < p.projector.layers.size(); ++i) {
    const auto& layer = p.projector.layers[i];
    detail::write_tensor(out, "proj.w" + std::to_string(i), layer.weight.rows(),
                         layer.weight.cols(), layer.weight.data());
    detail::write_tensor(out, "proj.b" + std::to_string(i), 1, layer.bias.size(),
                         layer.bias);
  }
  detail::write_tensor(out, "agg.w1", p.aggregator.w1.rows(), 1,
                       p.aggregator.w1.data());
  detail::write_tensor(out, "agg.w2", p.aggregator.w2.rows(), p.aggregator.w2.cols(),
                       p.aggregator.w2.data());
  if (p.aggregator.gated())
    detail::write_tensor(out, "agg.u2", p.aggregator.u2.rows(),
                         p.aggregator.u2.cols(), p.aggregator.u2.data());
  detail::write_tensor(out, "cls.w", 1, p.aggregator.classifier_w.size(),
                       p.aggregator.classifier_w);
  detail::write_tensor(out, "cls.b", 1, 1, {p.aggregator.classifier_b});
  out << "end\n";
  if (!out) throw std::runtime_error("failed writing params file: " + path);
}

inline ModelParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open params file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "milpdl-params v1")
    throw std::runtime_error("params: unsupported format version: " + line);
  std::string tag, agg_kind;
  {
    if (!std::getline(in, line)) throw std::runtime_error("params: truncated header");
    std::istringstream s(line);
    s >> tag >> agg_kind;
    if (tag != "aggregator" || (agg_kind != "plain" && agg_kind != "gated"))
      throw std::runtime_error("params: bad aggregator line: " + line);
  }
  std::size_t n_layers = 0;
  {
    if (!std::getline(in, line)) throw std::runtime_error("params: truncated header");
    std::istringstream s(line);
    s >> tag >> n_layers;
    if (tag != "projector_layers" || s.fail())
      throw std::runtime_error("params: bad projector_layers line: " + line);
  }
  ModelParams p;
  for (std::size_t i = 0; i < n_layers; ++i) {
    auto w = detail::read_tensor(in, "proj.w" + std::to_string(i));
    auto b = detail::read_tensor(in, "proj.b" + std::to_string(i));
    if (b.cols != w.rows)
      throw std::runtime_error("params: bias/weight shape mismatch in layer " +
                               std::to_string(i));
    ProjectorLayer layer;
    layer.weight = Matrix(w.rows, w.cols, std::move(w.data));
    layer.bias = std::move(b.data);
    p.projector.layers.push_back(std::move(layer));
  }
  auto w1 = detail::read_tensor(in, "agg.w1");
  p.aggregator.w1 = Matrix(w1.rows, 1, std::move(w1.data));
  auto w2 = detail::read_tensor(in, "agg.w2");
  p.aggregator.w2 = Matrix(w2.rows, w2.cols, std::move(w2.data));
  if (agg_kind == "gated") {
    auto u2 = detail::read_tensor(in, "agg.u2");
    p.aggregator.u2 = Matrix(u2.rows, u2.cols, std::move(u2.data));
  }
  auto cw = detail::read_tensor(in, "cls.w");
  p.aggregator.classifier_w = std::move(cw.data);
  auto cb = detail::read_tensor(in, "cls.b");
  if (cb.data.size() != 1) throw std::runtime_error("params: cls.b must be a scalar");
  p.aggregator.classifier_b = cb.data[0];
  if (!std::getline(in, line) || line != "end")
    throw std::runtime_error("params: missing end marker");
  return p;
}

}  // namespace milpdl
