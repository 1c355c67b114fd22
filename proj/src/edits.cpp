// SPDX-License-Identifier: Apache-2.0
#include "gcrf/edits.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "json.hpp"

#include "gcrf/color_io.hpp"
#include "gcrf/error.hpp"

namespace gcrf {

Constraints to_constraints(const EditSet& edits, int grid_w, int grid_h) {
  if (grid_w < 1 || grid_h < 1) throw Error(ErrorKind::kBadInput, "grid must be at least 1x1");
  Constraints c(grid_w, grid_h, edits.beta);
  for (std::size_t i = 0; i < edits.edits.size(); ++i) {
    const Edit& e = edits.edits[i];
    if (e.row < 0 || e.row >= grid_h || e.col < 0 || e.col >= grid_w) {
      throw OutOfBoundsError(i, "edit " + std::to_string(i) + " at (" + std::to_string(e.row) + "," +
                                    std::to_string(e.col) + ") is outside the " + std::to_string(grid_w) + "x" +
                                    std::to_string(grid_h) + " grid");
    }
    if (!std::isfinite(e.a) || !std::isfinite(e.b)) {
      throw Error(ErrorKind::kBadInput, "edit " + std::to_string(i) + " has a non-finite color");
    }
    const std::size_t p = static_cast<std::size_t>(e.row) * grid_w + e.col;
    c.mask[p] = 1;
    c.target_a[p] = e.a / kChromaScale;
    c.target_b[p] = e.b / kChromaScale;
  }
  return c;
}

std::string edits_to_json(const EditSet& edits) {
  nlohmann::ordered_json doc;
  doc["beta"] = edits.beta;
  doc["edits"] = nlohmann::ordered_json::array();
  for (const Edit& e : edits.edits) {
    nlohmann::ordered_json item;
    item["row"] = e.row;
    item["col"] = e.col;
    item["a"] = e.a;
    item["b"] = e.b;
    doc["edits"].push_back(std::move(item));
  }
  return doc.dump();
}

EditSet parse_edits_json(std::string_view text, bool* has_beta) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kBadInput, std::string("edits: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorKind::kBadInput, "edits: top level must be an object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "beta" && key != "edits") throw Error(ErrorKind::kBadInput, "edits: unknown key '" + key + "'");
  }
  EditSet out;
  if (has_beta) *has_beta = doc.contains("beta");
  if (doc.contains("beta")) {
    if (!doc["beta"].is_number()) throw Error(ErrorKind::kBadInput, "edits: beta must be a number");
    out.beta = doc["beta"].get<double>();
    if (!(out.beta > 0.0) || !std::isfinite(out.beta)) throw Error(ErrorKind::kBadInput, "edits: beta must be > 0");
  }
  if (!doc.contains("edits") || !doc["edits"].is_array()) {
    throw Error(ErrorKind::kBadInput, "edits: missing array 'edits'");
  }
  std::size_t index = 0;
  for (const auto& item : doc["edits"]) {
    const std::string where = "edits[" + std::to_string(index++) + "]";
    if (!item.is_object()) throw Error(ErrorKind::kBadInput, where + " must be an object");
    for (const auto& [key, _] : item.items()) {
      if (key != "row" && key != "col" && key != "a" && key != "b") {
        throw Error(ErrorKind::kBadInput, where + ": unknown key '" + key + "'");
      }
    }
    for (const char* key : {"row", "col"}) {
      if (!item.contains(key) || !item[key].is_number_integer()) {
        throw Error(ErrorKind::kBadInput, where + ": '" + key + "' must be an integer");
      }
    }
    for (const char* key : {"a", "b"}) {
      if (!item.contains(key) || !item[key].is_number()) {
        throw Error(ErrorKind::kBadInput, where + ": '" + key + "' must be a number");
      }
    }
    out.edits.push_back({item["row"].get<int>(), item["col"].get<int>(), item["a"].get<double>(),
                         item["b"].get<double>()});
  }
  return out;
}

PreparedImage prepare_image(const GrayImage& g, const PropagateOptions& opts) {
  if (g.size() == 0) throw Error(ErrorKind::kBadInput, "empty image");
  PreparedImage prep;
  prep.native = g;
  prep.grid = resample(g, opts.grid_w, opts.grid_h);
  if (const auto* baseline = std::get_if<BaselineEmbeddingSource>(&opts.embeddings)) {
    prep.embeddings = baseline_embeddings(prep.grid, baseline->dim, baseline->weights);
  } else {
    prep.embeddings = std::get<PixelEmbeddings>(opts.embeddings);
    if (prep.embeddings.pixels() != opts.grid_w * opts.grid_h) {
      throw Error(ErrorKind::kBadInput, "embedding pixel count does not match the solver grid");
    }
  }
  prep.similarity = build_similarity(prep.embeddings, opts.similarity);
  prep.smoothness = std::make_shared<const Eigen::MatrixXd>(smoothness_term(prep.similarity));
  return prep;
}

PropagateResult finish_propagation(const PreparedImage& prepared, const GcrfSystem& sys) {
  const Solution sol = solve(sys);
  PropagateResult out;
  out.grid_chroma = sol.field;
  for (auto& v : out.grid_chroma.a) v *= kChromaScale;
  for (auto& v : out.grid_chroma.b) v *= kChromaScale;
  out.native_chroma = resample(out.grid_chroma, prepared.native.width, prepared.native.height);
  out.image = compose_rgb(prepared.native, out.native_chroma, &out.clamped_pixels);
  std::size_t count = 0;
  for (auto m : sys.mask()) count += m ? 1 : 0;
  out.report = {sol.max_residual(), count, sys.beta(), sys.factorization()};
  return out;
}

PropagateResult propagate(const PreparedImage& prepared, const EditSet& edits, const PropagateOptions& opts) {
  const Constraints c = to_constraints(edits, opts.grid_w, opts.grid_h);
  if (c.count() == 0) {
    throw Error(ErrorKind::kSingularSystem, "empty edit mask: at least one edit is required to fix the color");
  }
  return finish_propagation(prepared, GcrfSystem::assemble_from(*prepared.smoothness, c, opts.assemble));
}

PropagateResult propagate(const GrayImage& g, const EditSet& edits, const PropagateOptions& opts) {
  if (edits.edits.empty()) {
    throw Error(ErrorKind::kSingularSystem, "empty edit mask: at least one edit is required to fix the color");
  }
  return propagate(prepare_image(g, opts), edits, opts);
}

EditSet reveal_patches(const ColorFieldLab& gt, int n_points, int patch, std::uint64_t seed, PatchMode mode,
                       double beta) {
  if (n_points < 1) throw Error(ErrorKind::kBadInput, "reveal_patches needs n_points >= 1");
  if (patch < 1 || patch % 2 == 0) throw Error(ErrorKind::kBadInput, "patch size must be odd and >= 1");
  const int w = gt.width;
  const int h = gt.height;
  const int total = w * h;
  if (n_points > total) throw Error(ErrorKind::kBadInput, "more points than pixels");

  // Partial Fisher-Yates on raw engine output keeps draws identical across
  // standard library implementations.
  std::mt19937_64 rng(seed);
  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < n_points; ++i) {
    const int j = i + static_cast<int>(rng() % static_cast<std::uint64_t>(total - i));
    std::swap(order[i], order[j]);
  }

  EditSet out;
  out.beta = beta;
  const int half = patch / 2;
  for (int k = 0; k < n_points; ++k) {
    const int row = order[k] / w;
    const int col = order[k] % w;
    const int r0 = std::max(0, row - half), r1 = std::min(h - 1, row + half);
    const int c0 = std::max(0, col - half), c1 = std::min(w - 1, col + half);
    if (mode == PatchMode::kFullPatch) {
      for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
          const std::size_t p = static_cast<std::size_t>(r) * w + c;
          out.edits.push_back({r, c, gt.a[p], gt.b[p]});
        }
      }
      continue;
    }
    double sa = 0.0, sb = 0.0;
    int n = 0;
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        const std::size_t p = static_cast<std::size_t>(r) * w + c;
        sa += gt.a[p];
        sb += gt.b[p];
        ++n;
      }
    }
    out.edits.push_back({row, col, sa / n, sb / n});
  }
  return out;
}

}  // namespace gcrf
