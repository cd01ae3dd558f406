#pragma once

// Plain-text serialization: atomic file writes, deterministic number
// formatting, MLP checkpoints and the SVG plan rendering.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "otda/data.hpp"
#include "otda/matrix.hpp"
#include "otda/measure.hpp"
#include "otda/mlp.hpp"

namespace otda {

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::string format_double(double v, const char* fmt = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

// Write-then-rename so interrupted runs never leave truncated files.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename into " + path.string());
}

inline std::string matrix_csv(const Matrix& m) {
  std::ostringstream out;
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
  return out.str();
}

inline std::string dataset_csv(const LabeledDataset& ds) {
  std::ostringstream out;
  for (std::size_t j = 0; j < ds.points.cols; ++j) out << 'x' << j << ',';
  out << "label,domain\n";
  const char* tag = ds.domain_tag == DomainTag::source ? "source" : "target";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.points.cols; ++j) out << format_double(ds.points(i, j)) << ',';
    out << ds.labels[i] << ',' << tag << '\n';
  }
  return out.str();
}

// Checkpoint layout (documented in the README): a version line, a dims line,
// then one "layer" header plus row-major W and b lines per tensor.
inline std::string serialize_checkpoint(const MlpParams& p) {
  std::ostringstream out;
  out << "OTDA-MLP 1\n";
  out << "dims " << p.input_dim() << ' ' << p.embed_dim() << ' ' << p.class_count() << ' '
      << p.feature_layers.size() << '\n';
  auto dump_tensor = [&](const char* tag, const std::vector<double>& v) {
    out << tag;
    for (double x : v) out << ' ' << format_double(x);
    out << '\n';
  };
  for (std::size_t l = 0; l < p.feature_layers.size(); ++l) {
    const auto& layer = p.feature_layers[l];
    out << "layer " << l << ' ' << (layer.act == Activation::relu ? "relu" : "tanh") << ' '
        << layer.weights.rows << ' ' << layer.weights.cols << '\n';
    dump_tensor("W", layer.weights.data);
    dump_tensor("b", layer.bias);
  }
  out << "classifier " << p.classifier_weights.rows << ' ' << p.classifier_weights.cols << '\n';
  dump_tensor("W", p.classifier_weights.data);
  dump_tensor("b", p.classifier_bias);
  return out.str();
}

inline MlpParams parse_checkpoint(std::istream& in) {
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "OTDA-MLP" || version != 1)
    throw std::runtime_error("checkpoint: unsupported header");
  std::string key;
  std::size_t input_dim = 0, embed = 0, classes = 0, nlayers = 0;
  in >> key >> input_dim >> embed >> classes >> nlayers;
  if (key != "dims") throw std::runtime_error("checkpoint: missing dims block");

  auto read_tensor = [&](const char* tag, std::vector<double>& v, std::size_t count) {
    in >> key;
    if (key != tag) throw std::runtime_error("checkpoint: expected tensor tag");
    v.resize(count);
    for (std::size_t i = 0; i < count; ++i) in >> v[i];
  };

  MlpParams p;
  for (std::size_t l = 0; l < nlayers; ++l) {
    std::size_t idx = 0, rows = 0, cols = 0;
    std::string act;
    in >> key >> idx >> act >> rows >> cols;
    if (key != "layer") throw std::runtime_error("checkpoint: expected layer header");
    Layer layer;
    layer.act = act == "relu" ? Activation::relu : Activation::tanh_act;
    layer.weights = Matrix(rows, cols);
    read_tensor("W", layer.weights.data, rows * cols);
    read_tensor("b", layer.bias, rows);
    p.feature_layers.push_back(std::move(layer));
  }
  std::size_t rows = 0, cols = 0;
  in >> key >> rows >> cols;
  if (key != "classifier") throw std::runtime_error("checkpoint: expected classifier header");
  p.classifier_weights = Matrix(rows, cols);
  read_tensor("W", p.classifier_weights.data, rows * cols);
  read_tensor("b", p.classifier_bias, rows);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return p;
}

inline void save_checkpoint(const std::filesystem::path& path, const MlpParams& p) {
  atomic_write_file(path, serialize_checkpoint(p));
}

inline MlpParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return parse_checkpoint(in);
}

// Points colored by class (source = circles, target = squares) with one line
// segment per plan entry above the floor; opacity scales with entry / max.
inline std::string render_plan_svg(const LabeledDataset& src, const LabeledDataset& tgt,
                                   const TransportPlan& plan, const std::string& title) {
  const double width = 640.0, height = 640.0, margin = 48.0;
  double lox = 1e300, hix = -1e300, loy = 1e300, hiy = -1e300;
  auto scan = [&](const Matrix& pts) {
    for (std::size_t i = 0; i < pts.rows; ++i) {
      lox = std::min(lox, pts(i, 0));
      hix = std::max(hix, pts(i, 0));
      loy = std::min(loy, pts(i, 1));
      hiy = std::max(hiy, pts(i, 1));
    }
  };
  scan(src.points);
  scan(tgt.points);
  const double spanx = std::max(hix - lox, 1e-9), spany = std::max(hiy - loy, 1e-9);
  auto px = [&](double x) { return margin + (x - lox) / spanx * (width - 2 * margin); };
  auto py = [&](double y) { return height - margin - (y - loy) / spany * (height - 2 * margin); };

  static const char* palette[] = {"#1f77b4", "#8c564b", "#2ca02c", "#d62728", "#9467bd", "#e377c2"};
  const std::size_t ncolors = 6;

  double max_entry = 0.0;
  for (double v : plan.coupling.data) max_entry = std::max(max_entry, v);

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "<title>" << title << "</title>\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (max_entry > 0.0) {
    for (std::size_t i = 0; i < plan.coupling.rows; ++i)
      for (std::size_t j = 0; j < plan.coupling.cols; ++j) {
        const double v = plan.coupling(i, j);
        if (v <= 1e-8) continue;
        out << "<line x1=\"" << format_double(px(src.points(i, 0)), "%.3f") << "\" y1=\""
            << format_double(py(src.points(i, 1)), "%.3f") << "\" x2=\""
            << format_double(px(tgt.points(j, 0)), "%.3f") << "\" y2=\""
            << format_double(py(tgt.points(j, 1)), "%.3f")
            << "\" stroke=\"#555555\" stroke-width=\"1.2\" stroke-opacity=\""
            << format_double(v / max_entry, "%.4f") << "\"/>\n";
      }
  }
  for (std::size_t i = 0; i < src.size(); ++i)
    out << "<circle cx=\"" << format_double(px(src.points(i, 0)), "%.3f") << "\" cy=\""
        << format_double(py(src.points(i, 1)), "%.3f") << "\" r=\"6\" fill=\""
        << palette[static_cast<std::size_t>(src.labels[i]) % ncolors] << "\"/>\n";
  for (std::size_t j = 0; j < tgt.size(); ++j) {
    const double x = px(tgt.points(j, 0)), y = py(tgt.points(j, 1));
    out << "<rect x=\"" << format_double(x - 5.0, "%.3f") << "\" y=\""
        << format_double(y - 5.0, "%.3f") << "\" width=\"10\" height=\"10\" fill=\""
        << palette[static_cast<std::size_t>(tgt.labels[j]) % ncolors]
        << "\" stroke=\"#222222\" stroke-width=\"1\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace otda
