// SPDX-License-Identifier: Apache-2.0
//
// GCRFMDL1 layout: magic, u32 version, u32 section count, then sections of
// (4-byte tag, u64 payload length, payload). All values little-endian.
//   "VAE " u32 latent_dim, u32 basis size, f64 x (encoder + decoder params)
//   "GMM " u32 M, u32 d, f64 sigma, f64 x M weights, f64 x M*d means (row-major)
//   "EMB " u32 D, u32 feature count, f64 temperature, f64 x D*F structure map
#include <cstring>

#include "gcrf/binary_io.hpp"
#include "gcrf/color_io.hpp"
#include "gcrf/error.hpp"
#include "gcrf/pipeline.hpp"

namespace gcrf {
namespace {

constexpr std::uint32_t kVersion = 1;

void section(ByteWriter& out, std::string_view tag, ByteWriter payload) {
  out.magic(tag);
  out.u64(payload.size());
  out.bytes(payload.buffer());
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const TrainedModel& model) {
  const ToyVae& vae = model.vae;
  ByteWriter out;
  out.magic("GCRFMDL1");
  out.u32(kVersion);
  out.u32(3);

  ByteWriter v;
  v.u32(static_cast<std::uint32_t>(vae.latent_dim()));
  v.u32(kBasisSize);
  const auto [s_begin, s_end] = vae.block_range(ToyVae::kStructureBlock);
  v.f64s(std::span(vae.params().data(), static_cast<std::size_t>(s_begin)));
  section(out, "VAE ", std::move(v));

  ByteWriter g;
  g.u32(static_cast<std::uint32_t>(model.gmm.components()));
  g.u32(static_cast<std::uint32_t>(model.gmm.dim()));
  g.f64(model.gmm.sigma);
  g.f64s(std::span(model.gmm.weights.data(), static_cast<std::size_t>(model.gmm.weights.size())));
  for (int i = 0; i < model.gmm.components(); ++i) {
    for (int j = 0; j < model.gmm.dim(); ++j) g.f64(model.gmm.means(i, j));
  }
  section(out, "GMM ", std::move(g));

  ByteWriter e;
  e.u32(static_cast<std::uint32_t>(vae.dims().embedding_dim));
  e.u32(kBaselineFeatureCount);
  e.f64(vae.dims().temperature);
  e.f64s(std::span(vae.params().data() + s_begin, static_cast<std::size_t>(s_end - s_begin)));
  section(out, "EMB ", std::move(e));
  return out.take();
}

TrainedModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  in.expect_magic("GCRFMDL1");
  if (in.u32() != kVersion) throw Error(ErrorKind::kBadInput, "unsupported checkpoint version");
  const std::uint32_t sections = in.u32();

  std::span<const std::uint8_t> vae_bytes, gmm_bytes, emb_bytes;
  for (std::uint32_t s = 0; s < sections; ++s) {
    const auto tag = in.bytes(4);
    const std::uint64_t len = in.u64();
    if (len > in.remaining()) throw Error(ErrorKind::kBadInput, "truncated checkpoint section");
    const auto payload = in.bytes(static_cast<std::size_t>(len));
    if (std::memcmp(tag.data(), "VAE ", 4) == 0) vae_bytes = payload;
    else if (std::memcmp(tag.data(), "GMM ", 4) == 0) gmm_bytes = payload;
    else if (std::memcmp(tag.data(), "EMB ", 4) == 0) emb_bytes = payload;
    // Unknown sections are skipped so newer writers stay readable.
  }
  if (vae_bytes.empty() || gmm_bytes.empty() || emb_bytes.empty()) {
    throw Error(ErrorKind::kBadInput, "checkpoint is missing a section");
  }

  ByteReader e(emb_bytes);
  ModelDims dims;
  dims.embedding_dim = static_cast<int>(e.u32());
  if (e.u32() != kBaselineFeatureCount) throw Error(ErrorKind::kBadInput, "checkpoint feature count mismatch");
  dims.temperature = e.f64();

  ByteReader v(vae_bytes);
  dims.latent_dim = static_cast<int>(v.u32());
  if (v.u32() != kBasisSize) throw Error(ErrorKind::kBadInput, "checkpoint basis size mismatch");
  if (dims.latent_dim < 1 || dims.latent_dim > 4096 || dims.embedding_dim < 1 || dims.embedding_dim > 4096) {
    throw Error(ErrorKind::kBadInput, "checkpoint dimensions out of range");
  }

  TrainedModel model;
  model.vae = ToyVae(dims);
  const auto [s_begin, s_end] = model.vae.block_range(ToyVae::kStructureBlock);
  if (v.remaining() != static_cast<std::size_t>(s_begin) * 8 || e.remaining() != static_cast<std::size_t>(s_end - s_begin) * 8) {
    throw Error(ErrorKind::kBadInput, "checkpoint parameter count mismatch");
  }
  v.f64s(std::span(model.vae.params().data(), static_cast<std::size_t>(s_begin)));
  e.f64s(std::span(model.vae.params().data() + s_begin, static_cast<std::size_t>(s_end - s_begin)));

  ByteReader g(gmm_bytes);
  const std::uint32_t m = g.u32();
  const std::uint32_t d = g.u32();
  if (m < 1 || m > 4096 || d != static_cast<std::uint32_t>(dims.latent_dim)) {
    throw Error(ErrorKind::kBadInput, "checkpoint mixture dimensions invalid");
  }
  model.gmm.sigma = g.f64();
  model.gmm.weights.resize(m);
  g.f64s(std::span(model.gmm.weights.data(), m));
  model.gmm.means.resize(m, d);
  for (std::uint32_t i = 0; i < m; ++i) {
    for (std::uint32_t j = 0; j < d; ++j) model.gmm.means(i, j) = g.f64();
  }
  if (!g.done()) throw Error(ErrorKind::kBadInput, "checkpoint mixture section has trailing bytes");
  model.gmm.validate();
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const TrainedModel& model) {
  write_file_bytes(path, encode_checkpoint(model));
}

TrainedModel load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace gcrf
