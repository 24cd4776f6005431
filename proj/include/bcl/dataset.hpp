#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bcl/geometry.hpp"
#include "bcl/mlp.hpp"
#include "bcl/numeric.hpp"

namespace bcl {

struct Track {
  std::uint64_t id{0};
  int label{0};
  std::vector<std::vector<float>> frames;  // [frame][input_dim]
  std::optional<std::pair<std::int64_t, std::int64_t>> span;  // inclusive frame indices
};

// Samples grouped into tracks with integer identity labels. Immutable once
// built; readers may share freely.
struct TrackDataset {
  std::vector<Track> tracks;
  int input_dim{0};
  int identity_count{0};

  std::size_t size() const { return tracks.size(); }

  void validate() const {
    for (const Track& t : tracks) {
      if (t.frames.empty()) throw std::invalid_argument("TrackDataset: track with no frames");
      for (const auto& f : t.frames)
        if (static_cast<int>(f.size()) != input_dim)
          throw std::invalid_argument("TrackDataset: frame dim mismatch");
      if (t.label < 0 || t.label >= identity_count)
        throw std::invalid_argument("TrackDataset: label out of range");
    }
  }

  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(tracks.size());
    for (const Track& t : tracks) out.push_back(t.label);
    return out;
  }
};

// Knobs for the synthetic generator standing in for CNN features. Track
// counts per identity follow rank^(-zipf_exponent), apportioned over
// total_tracks with at least one track each.
struct SynthSpec {
  int num_identities{1};
  double zipf_exponent{1.0};
  int total_tracks{100};
  int frames_min{3};
  int frames_max{8};
  int dim{16};
  double separation{8.0};  // multiple of within_std between identity centers
  double within_std{0.05};
  SpaceKind feature_space{SpaceKind::Euclidean};
  bool with_spans{false};
};

namespace detail {

// Largest-remainder apportionment of total tracks across ranked identities.
inline std::vector<int> zipf_track_counts(int k, double s, int total) {
  std::vector<double> weight(k);
  double wsum = 0.0;
  for (int i = 0; i < k; ++i) {
    weight[i] = std::pow(static_cast<double>(i + 1), -s);
    wsum += weight[i];
  }
  std::vector<int> counts(k, 1);  // every identity keeps at least one track
  int remaining = total - k;
  if (remaining < 0) remaining = 0;
  std::vector<double> exact(k);
  std::vector<int> floors(k);
  int assigned = 0;
  for (int i = 0; i < k; ++i) {
    exact[i] = remaining * weight[i] / wsum;
    floors[i] = static_cast<int>(exact[i]);
    assigned += floors[i];
  }
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return exact[a] - floors[a] > exact[b] - floors[b];
  });
  for (int r = 0; r < remaining - assigned; ++r) ++floors[order[r % k]];
  for (int i = 0; i < k; ++i) counts[i] += floors[i];
  return counts;
}

inline Vec random_unit_vector(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec v(dim);
  double n = 0.0;
  do {
    for (double& x : v) x = gauss(rng);
    n = norm2(v);
  } while (n < 1e-12);
  for (double& x : v) x /= n;
  return v;
}

}  // namespace detail

// Generate a track dataset with skewed cluster membership: identity centers
// on the unit sphere separated by at least separation*within_std, isotropic
// Gaussian frame noise, Zipf track counts. Deterministic given the rng.
inline TrackDataset synth_generate(const SynthSpec& spec, std::mt19937_64& rng) {
  if (spec.num_identities < 1) throw std::invalid_argument("synth_generate: K must be >= 1");
  if (spec.dim < 2) throw std::invalid_argument("synth_generate: dim must be >= 2");
  if (spec.frames_min < 1 || spec.frames_max < spec.frames_min)
    throw std::invalid_argument("synth_generate: bad frames range");
  if (spec.total_tracks < spec.num_identities)
    throw std::invalid_argument("synth_generate: need at least one track per identity");

  const double min_sep = spec.separation * spec.within_std;
  std::vector<Vec> centers;
  centers.reserve(spec.num_identities);
  long attempts = 0;
  while (static_cast<int>(centers.size()) < spec.num_identities) {
    if (++attempts > 100000)
      throw std::runtime_error("synth_generate: center separation infeasible after 1e5 attempts");
    Vec cand = detail::random_unit_vector(spec.dim, rng);
    bool ok = true;
    for (const Vec& c : centers)
      if (std::sqrt(sq_dist(cand, c)) < min_sep) {
        ok = false;
        break;
      }
    if (ok) centers.push_back(std::move(cand));
  }

  const std::vector<int> counts =
      detail::zipf_track_counts(spec.num_identities, spec.zipf_exponent, spec.total_tracks);

  TrackDataset ds;
  ds.input_dim = spec.dim;
  ds.identity_count = spec.num_identities;
  std::normal_distribution<double> noise(0.0, spec.within_std);
  std::uniform_int_distribution<int> frame_count(spec.frames_min, spec.frames_max);
  std::uniform_int_distribution<std::int64_t> span_start(0, 100000);
  std::uniform_int_distribution<std::int64_t> span_len(30, 120);

  std::uint64_t next_id = 0;
  for (int k = 0; k < spec.num_identities; ++k) {
    std::vector<std::pair<std::int64_t, std::int64_t>> own_spans;
    for (int t = 0; t < counts[k]; ++t) {
      Track track;
      track.id = next_id++;
      track.label = k;
      const int nf = frame_count(rng);
      track.frames.reserve(nf);
      for (int f = 0; f < nf; ++f) {
        Vec x = centers[k];
        for (double& v : x) v += noise(rng);
        if (spec.feature_space == SpaceKind::Hypersphere) {
          const double n = norm2(x);
          for (double& v : x) v /= n;
        }
        std::vector<float> frame(spec.dim);
        for (int j = 0; j < spec.dim; ++j) frame[j] = static_cast<float>(x[j]);
        track.frames.push_back(std::move(frame));
      }
      if (spec.with_spans) {
        // Same identity never overlaps itself; cross-identity overlap is
        // free to happen.
        for (int tries = 0; tries < 64; ++tries) {
          const std::int64_t s = span_start(rng);
          const std::int64_t e = s + span_len(rng);
          bool clash = false;
          for (const auto& [os, oe] : own_spans)
            if (s <= oe && os <= e) {
              clash = true;
              break;
            }
          if (!clash) {
            track.span = {s, e};
            own_spans.emplace_back(s, e);
            break;
          }
        }
        if (!track.span) {  // no free slot found: park it off-timeline
          const std::int64_t s = span_start(rng) + 200000;
          track.span = {s, s + span_len(rng)};
          own_spans.emplace_back(*track.span);
        }
      }
      ds.tracks.push_back(std::move(track));
    }
  }
  return ds;
}

// --- feature file format (BCLT) ---------------------------------------------
//
//   magic "BCLT" | u32 version=1 | u32 input_dim | u32 track_count
//   per track: u64 track_id | u32 identity_label | u32 frame_count
//              i64 span_start | i64 span_end  (-1, -1 when absent)
//              frame_count * input_dim little-endian f32
//
// identity_count is derived as max(label)+1 on load.

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}
  std::size_t byte_offset() const { return offset_; }

 private:
  std::size_t offset_;
};

namespace detail {

class ByteReader {
 public:
  explicit ByteReader(std::istream& is) : is_(is) {}

  template <typename T>
  T read(const char* what) {
    T v{};
    if (!is_.read(reinterpret_cast<char*>(&v), sizeof(T)))
      throw ParseError(std::string("truncated reading ") + what, offset_);
    offset_ += sizeof(T);
    return v;
  }

  void read_bytes(char* dst, std::size_t n, const char* what) {
    if (!is_.read(dst, static_cast<std::streamsize>(n)))
      throw ParseError(std::string("truncated reading ") + what, offset_);
    offset_ += n;
  }

  std::size_t offset() const { return offset_; }

 private:
  std::istream& is_;
  std::size_t offset_{0};
};

}  // namespace detail

inline void save_features(const TrackDataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write("BCLT", 4);
  detail::write_pod<std::uint32_t>(os, 1);
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ds.input_dim));
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ds.tracks.size()));
  for (const Track& t : ds.tracks) {
    detail::write_pod<std::uint64_t>(os, t.id);
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.label));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.frames.size()));
    detail::write_pod<std::int64_t>(os, t.span ? t.span->first : -1);
    detail::write_pod<std::int64_t>(os, t.span ? t.span->second : -1);
    for (const auto& frame : t.frames)
      os.write(reinterpret_cast<const char*>(frame.data()),
               static_cast<std::streamsize>(frame.size() * sizeof(float)));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline TrackDataset load_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  detail::ByteReader r(is);

  char magic[4];
  r.read_bytes(magic, 4, "magic");
  if (std::memcmp(magic, "BCLT", 4) != 0) throw ParseError("bad magic (want BCLT)", 0);
  const auto version = r.read<std::uint32_t>("version");
  if (version != 1) throw ParseError("unsupported version " + std::to_string(version), 4);
  const auto dim = r.read<std::uint32_t>("input_dim");
  if (dim == 0 || dim > (1u << 20)) throw ParseError("implausible input_dim", 8);
  const auto track_count = r.read<std::uint32_t>("track_count");

  TrackDataset ds;
  ds.input_dim = static_cast<int>(dim);
  ds.tracks.reserve(track_count);
  int max_label = -1;
  for (std::uint32_t ti = 0; ti < track_count; ++ti) {
    Track t;
    t.id = r.read<std::uint64_t>("track_id");
    t.label = static_cast<int>(r.read<std::uint32_t>("identity_label"));
    const auto frame_count = r.read<std::uint32_t>("frame_count");
    if (frame_count == 0) throw ParseError("track with zero frames", r.offset() - 4);
    const auto span_start = r.read<std::int64_t>("span_start");
    const auto span_end = r.read<std::int64_t>("span_end");
    if (span_start >= 0 && span_end >= 0) t.span = {span_start, span_end};
    t.frames.assign(frame_count, std::vector<float>(dim));
    for (auto& frame : t.frames)
      r.read_bytes(reinterpret_cast<char*>(frame.data()), frame.size() * sizeof(float),
                   "frame features");
    max_label = std::max(max_label, t.label);
    ds.tracks.push_back(std::move(t));
  }
  ds.identity_count = max_label + 1;
  try {
    ds.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("invalid dataset content: ") + e.what(), r.offset());
  }
  return ds;
}

// Mean of a track's frames in base-feature space.
inline Vec track_input_mean(const Track& t) {
  if (t.frames.empty()) throw std::invalid_argument("track_input_mean: empty track");
  Vec mean(t.frames[0].size(), 0.0);
  for (const auto& frame : t.frames)
    for (std::size_t j = 0; j < frame.size(); ++j) mean[j] += frame[j];
  for (double& v : mean) v /= static_cast<double>(t.frames.size());
  return mean;
}

// Test-time track representation: frames averaged in base-feature space
// first, then embedded, keeping the average in the same space as the
// training samples.
inline Vec track_embedding(const MlpModel& model, const Track& t) {
  return forward(model, track_input_mean(t));
}

inline std::vector<Vec> embed_tracks(const MlpModel& model, const TrackDataset& ds) {
  std::vector<Vec> inputs;
  inputs.reserve(ds.tracks.size());
  for (const Track& t : ds.tracks) inputs.push_back(track_input_mean(t));
  return forward_batch(model, inputs);
}

// Automatically mined fine-tuning constraints. Positives are two
// frame-subset views of one track (track_a == track_b); negatives pair
// distinct tracks whose time spans overlap.
struct PairSet {
  struct Positive {
    std::size_t track_a, track_b;
    double orig_sq_dist;
  };
  struct Negative {
    std::size_t track_a, track_b;
  };
  std::vector<Positive> positives;
  std::vector<Negative> negatives;
};

// Two views of a track: means of complementary halves of a shuffled frame
// list. Single-frame tracks yield the frame twice.
inline std::pair<Vec, Vec> track_half_views(const Track& t, std::mt19937_64& rng) {
  const std::size_t nf = t.frames.size();
  std::vector<std::size_t> order(nf);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = nf; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> u(0, i - 1);
    std::swap(order[i - 1], order[u(rng)]);
  }
  const std::size_t half = std::max<std::size_t>(1, nf / 2);
  auto mean_of = [&](std::size_t lo, std::size_t hi) {
    Vec m(t.frames[0].size(), 0.0);
    for (std::size_t i = lo; i < hi; ++i)
      for (std::size_t j = 0; j < m.size(); ++j) m[j] += t.frames[order[i]][j];
    for (double& v : m) v /= static_cast<double>(hi - lo);
    return m;
  };
  if (nf == 1) return {mean_of(0, 1), mean_of(0, 1)};
  return {mean_of(0, half), mean_of(half, nf)};
}

class UnsupportedDatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mine pairwise constraints from a dataset with time spans: negatives from
// span overlap, positives from within-track views, each list subsampled
// uniformly to max_pairs. orig_sq_dist comes from the supplied model.
inline PairSet mine_pairs(const TrackDataset& ds, const MlpModel& model, std::size_t max_pairs,
                          std::mt19937_64& rng) {
  for (const Track& t : ds.tracks)
    if (!t.span) throw UnsupportedDatasetError("mine_pairs: dataset has tracks without time spans");

  PairSet ps;
  const std::size_t n = ds.tracks.size();
  for (std::size_t a = 0; a + 1 < n; ++a) {
    const auto& [sa, ea] = *ds.tracks[a].span;
    for (std::size_t b = a + 1; b < n; ++b) {
      const auto& [sb, eb] = *ds.tracks[b].span;
      if (sa <= eb && sb <= ea) ps.negatives.push_back({a, b});
    }
  }

  auto subsample = [&](auto& list) {
    if (list.size() <= max_pairs) return;
    for (std::size_t i = 0; i < max_pairs; ++i) {
      std::uniform_int_distribution<std::size_t> u(i, list.size() - 1);
      std::swap(list[i], list[u(rng)]);
    }
    list.resize(max_pairs);
  };
  subsample(ps.negatives);

  std::vector<std::size_t> track_order(n);
  std::iota(track_order.begin(), track_order.end(), 0);
  subsample(track_order);
  for (std::size_t t : track_order) {
    auto [va, vb] = track_half_views(ds.tracks[t], rng);
    const Vec fa = forward(model, va);
    const Vec fb = forward(model, vb);
    ps.positives.push_back({t, t, sq_dist(fa, fb)});
  }
  return ps;
}

}  // namespace bcl
