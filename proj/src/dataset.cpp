#include "hprobe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "hprobe/error.hpp"
#include "hprobe/random.hpp"

namespace hprobe {

bool Dataset::has_layer(int layer) const {
  return std::find(meta.layers.begin(), meta.layers.end(), layer) !=
         meta.layers.end();
}

std::size_t Dataset::num_tokens() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += static_cast<std::size_t>(s.num_tokens);
  return n;
}

double Dataset::positive_rate() const {
  std::size_t pos = 0, total = 0;
  for (const auto& s : sequences) {
    for (int t = 0; t < s.num_tokens; ++t) {
      if (!s.mask[t]) continue;
      ++total;
      pos += s.token_labels[t];
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(pos) / total;
}

std::vector<std::uint8_t> labels_from_spans(
    const std::vector<SpanAnnotation>& spans, int num_tokens) {
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(num_tokens), 0);
  for (const auto& s : spans) {
    if (s.label != 1) continue;
    for (int t = std::max(0, s.start); t <= s.end && t < num_tokens; ++t) {
      labels[t] = 1;
    }
  }
  return labels;
}

namespace {

void check_distribution(const TokenSequence& seq, const FloatMatrix& dist,
                        const char* field, std::optional<int> vocab,
                        std::vector<Violation>& out) {
  if (dist.rows() != seq.num_tokens) {
    out.push_back({seq.id, field, "row count differs from num_tokens"});
    return;
  }
  if (vocab && dist.cols() != *vocab) {
    out.push_back({seq.id, field, "column count differs from vocab_size"});
    return;
  }
  for (Eigen::Index r = 0; r < dist.rows(); ++r) {
    double sum = 0.0;
    bool negative = false;
    for (Eigen::Index v = 0; v < dist.cols(); ++v) {
      const double p = dist(r, v);
      if (!(p >= 0.0)) negative = true;
      sum += p;
    }
    if (negative) {
      std::ostringstream msg;
      msg << "row " << r << " has a negative or non-finite entry";
      out.push_back({seq.id, field, msg.str()});
    } else if (std::abs(sum - 1.0) > 1e-6) {
      std::ostringstream msg;
      msg << "row " << r << " sums to " << sum << ", expected 1";
      out.push_back({seq.id, field, msg.str()});
    }
  }
}

}  // namespace

std::vector<Violation> validate(const Dataset& ds) {
  std::vector<Violation> out;
  const auto& meta = ds.meta;
  if (meta.hidden_dim <= 0) out.push_back({"", "hidden_dim", "must be > 0"});
  if (meta.num_layers <= 0) out.push_back({"", "num_layers", "must be > 0"});
  if (meta.vocab_size && *meta.vocab_size <= 0) {
    out.push_back({"", "vocab_size", "must be > 0 when present"});
  }
  for (int l : meta.layers) {
    if (l < 1 || l > meta.num_layers) {
      out.push_back({"", "layers", "layer " + std::to_string(l) +
                                       " outside 1..num_layers"});
    }
  }

  std::set<std::string> ids;
  for (const auto& seq : ds.sequences) {
    if (!ids.insert(seq.id).second) {
      out.push_back({seq.id, "id", "duplicate sequence id"});
    }
    const int n = seq.num_tokens;
    if (n <= 0) {
      out.push_back({seq.id, "num_tokens", "must be > 0"});
      continue;
    }
    if (static_cast<int>(seq.mask.size()) != n) {
      out.push_back({seq.id, "mask", "length differs from num_tokens"});
    } else if (std::any_of(seq.mask.begin(), seq.mask.end(),
                           [](std::uint8_t m) { return m > 1; })) {
      out.push_back({seq.id, "mask", "entries must be 0 or 1"});
    }

    for (int l : meta.layers) {
      auto it = seq.states.find(l);
      if (it == seq.states.end()) {
        out.push_back({seq.id, "states", "layer " + std::to_string(l) +
                                             " missing"});
        continue;
      }
      if (it->second.rows() != n || it->second.cols() != meta.hidden_dim) {
        out.push_back({seq.id, "states", "layer " + std::to_string(l) +
                                             " has the wrong shape"});
      }
    }
    for (const auto& [l, m] : seq.states) {
      if (!ds.has_layer(l)) {
        out.push_back({seq.id, "states", "layer " + std::to_string(l) +
                                             " not listed in meta.layers"});
      }
    }

    std::vector<SpanAnnotation> sorted = seq.spans;
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.start < b.start; });
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const auto& s = sorted[i];
      std::ostringstream where;
      where << "span [" << s.start << ", " << s.end << "]";
      if (s.start < 0 || s.start > s.end || s.end >= n) {
        out.push_back({seq.id, "spans", where.str() + " out of bounds"});
      }
      if (s.label != 0 && s.label != 1) {
        out.push_back({seq.id, "spans", where.str() + " has non-binary label"});
      }
      if (i > 0 && s.start <= sorted[i - 1].end) {
        out.push_back({seq.id, "spans", where.str() + " overlaps another span"});
      }
    }

    if (static_cast<int>(seq.token_labels.size()) != n) {
      out.push_back({seq.id, "token_labels", "length differs from num_tokens"});
    } else if (seq.token_labels != labels_from_spans(seq.spans, n)) {
      out.push_back({seq.id, "token_labels", "inconsistent with spans"});
    }

    if (seq.nll) {
      if (static_cast<int>(seq.nll->size()) != n) {
        out.push_back({seq.id, "nll", "length differs from num_tokens"});
      } else {
        for (int t = 0; t < n; ++t) {
          const double v = (*seq.nll)[t];
          const bool unmasked =
              t < static_cast<int>(seq.mask.size()) && seq.mask[t];
          if (!std::isfinite(v) || (unmasked && v < 0.0)) {
            out.push_back({seq.id, "nll", "token " + std::to_string(t) +
                                              " is negative or non-finite"});
          }
        }
      }
    }
    if (seq.dist_base) {
      check_distribution(seq, *seq.dist_base, "dist_base", meta.vocab_size, out);
    }
    if (seq.dist_adapted) {
      check_distribution(seq, *seq.dist_adapted, "dist_adapted",
                         meta.vocab_size, out);
    }
    if (seq.dist_base && seq.dist_adapted &&
        (seq.dist_base->cols() != seq.dist_adapted->cols())) {
      out.push_back({seq.id, "dist_adapted", "shape differs from dist_base"});
    }
  }
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction,
                                  std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("split: train_fraction must lie in (0, 1)");
  }
  const std::size_t n = ds.sequences.size();
  if (n < 2) throw ConfigError("split: need at least 2 sequences");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, "dataset.split");
  std::shuffle(order.begin(), order.end(), rng);

  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * n));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + n_train);
  std::vector<std::size_t> held_idx(order.begin() + n_train, order.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(held_idx.begin(), held_idx.end());

  auto take = [&](const std::vector<std::size_t>& idx) {
    Dataset part;
    part.meta = ds.meta;
    part.meta.index.clear();
    part.sequences.reserve(idx.size());
    for (std::size_t i : idx) part.sequences.push_back(ds.sequences[i]);
    return part;
  };
  return {take(train_idx), take(held_idx)};
}

}  // namespace hprobe
