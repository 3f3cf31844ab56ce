#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "svs/core/rng.hpp"
#include "svs/core/tensor.hpp"
#include "svs/corpus/build.hpp"

namespace svs::corpus {

constexpr int kQueryFrames = 256;
constexpr int kMelBins = 80;
constexpr int kLinearBins = 513;
constexpr int kLinearPerMel = 4;  // linear hop 256 vs mel hop 1024

// 80x256 mel crop from another song of the same singer. Songs shorter than
// 256 frames are tail-padded with zeros (the same all-zero convention as the
// autoregressive start frame). restrict_split limits candidates to one split;
// training uses "train" so held-out songs never feed the identity encoder.
inline Tensor sample_query(const LoadedCorpus& corpus, const std::string& singer_id,
                                 const std::string& exclude_song_id, std::uint64_t seed,
                                 const std::string& restrict_split = std::string()) {
  std::vector<const ManifestEntry*> candidates;
  for (const auto& e : corpus.manifest.entries) {
    if (e.singer_id != singer_id || e.song_id == exclude_song_id) continue;
    if (!restrict_split.empty() && e.split != restrict_split) continue;
    candidates.push_back(&e);
  }
  if (candidates.empty())
    throw InsufficientData("sample_query: no other song for singer " + singer_id);
  Rng rng(seed);
  const auto& entry = *candidates[rng.below(candidates.size())];
  const auto it = corpus.mels.find(entry.song_id);
  if (it == corpus.mels.end())
    throw IoError("sample_query: missing mel features for " + entry.song_id);
  const Tensor& mel = it->second.values;
  const size_t n_frames = mel.shape[1];
  size_t offset = 0;
  if (n_frames > kQueryFrames)
    offset = rng.below(n_frames - kQueryFrames + 1);
  Tensor q({kMelBins, kQueryFrames});
  for (size_t r = 0; r < kMelBins; ++r)
    for (size_t t = 0; t < kQueryFrames; ++t)
      q.at(r, t) = offset + t < n_frames ? mel.at(r, offset + t) : 0.0;
  return q;
}

// Queries prefer the train split so held-out songs stay out of the identity
// path, falling back to any other song when the singer has no other train
// material (two-song corpora).
inline Tensor sample_query_prefer_train(const LoadedCorpus& corpus,
                                              const std::string& singer_id,
                                              const std::string& exclude_song_id,
                                              std::uint64_t seed) {
  try {
    return sample_query(corpus, singer_id, exclude_song_id, seed, "train");
  } catch (const InsufficientData&) {
    return sample_query(corpus, singer_id, exclude_song_id, seed);
  }
}

// One teacher-forcing segment of a song. All tensors are materialized:
// phoneme/pitch ids and mel frames share the mel frame grid, the linear
// target covers the same span at 4x time resolution, and mel_input is
// mel_target delayed one frame with an all-zero first column.
struct TrainingExample {
  std::string singer_id;
  std::string song_id;
  int seg_index = 0;
  int seg_begin = 0;  // frame offset within the song
  std::vector<int> phoneme_ids;
  std::vector<int> pitch_ids;
  Tensor mel_input;      // [80 x L]
  Tensor mel_target;     // [80 x L]
  Tensor linear_target;  // [513 x 4L]
  Tensor query;          // [80 x 256]

  size_t n_frames() const { return phoneme_ids.size(); }
};

namespace detail {

// Splits [0, total) into segments of at most `cap` frames, preferring the
// latest note boundary in (cap-16, cap] over a mid-note cut.
inline std::vector<int> segment_lengths(const std::vector<int>& boundaries, int total,
                                        int cap) {
  std::vector<int> lens;
  int start = 0;
  while (start < total) {
    const int remaining = total - start;
    if (remaining <= cap) {
      lens.push_back(remaining);
      break;
    }
    int take = 0;
    for (int b : boundaries) {
      const int len = b - start;
      if (len > cap - 16 && len <= cap) take = std::max(take, len);
    }
    if (take == 0) take = cap;
    lens.push_back(take);
    start += take;
  }
  return lens;
}

}  // namespace detail

inline std::vector<TrainingExample> make_examples(const LoadedCorpus& corpus,
                                                  const std::string& split,
                                                  int segment_cap = 256) {
  if (segment_cap < 32) throw InvalidConfig("make_examples: segment cap too small");
  std::vector<TrainingExample> out;
  for (const auto& entry : corpus.manifest.entries) {
    if (entry.split != split) continue;
    const auto score_it = corpus.scores.find(entry.song_id);
    const auto mel_it = corpus.mels.find(entry.song_id);
    const auto lin_it = corpus.linears.find(entry.song_id);
    if (score_it == corpus.scores.end() || mel_it == corpus.mels.end() ||
        lin_it == corpus.linears.end())
      throw IoError("make_examples: missing data for " + entry.song_id);
    const ScoreSequence& score = score_it->second;
    const Tensor& mel = mel_it->second.values;
    const Tensor& lin = lin_it->second.values;
    const int total = score.total_frames();
    if (static_cast<size_t>(total) != mel.shape[1])
      throw InvalidInput("make_examples: score/mel frame mismatch for " + entry.song_id);
    if (static_cast<size_t>(total) * kLinearPerMel != lin.shape[1])
      throw InvalidInput("make_examples: linear frame mismatch for " + entry.song_id);

    std::vector<int> frame_phoneme(static_cast<size_t>(total));
    std::vector<int> frame_pitch(static_cast<size_t>(total));
    std::vector<int> boundaries;
    int cursor = 0;
    for (const auto& note : score.notes) {
      const int pid = note.phoneme == "-" ? 0 : phoneme_id(note.phoneme);
      const int tid = note.phoneme == "-" ? 0 : pitch_id(note.midi_pitch);
      for (int k = 0; k < note.duration_frames; ++k) {
        frame_phoneme[static_cast<size_t>(cursor + k)] = pid;
        frame_pitch[static_cast<size_t>(cursor + k)] = tid;
      }
      cursor += note.duration_frames;
      boundaries.push_back(cursor);
    }

    const auto lens = detail::segment_lengths(boundaries, total, segment_cap);
    int start = 0;
    for (size_t si = 0; si < lens.size(); ++si) {
      const int L = lens[si];
      TrainingExample ex;
      ex.singer_id = entry.singer_id;
      ex.song_id = entry.song_id;
      ex.seg_index = static_cast<int>(si);
      ex.seg_begin = start;
      ex.phoneme_ids.assign(frame_phoneme.begin() + start,
                            frame_phoneme.begin() + start + L);
      ex.pitch_ids.assign(frame_pitch.begin() + start, frame_pitch.begin() + start + L);
      ex.mel_target = Tensor({kMelBins, L});
      ex.mel_input = Tensor({kMelBins, L});
      for (size_t r = 0; r < kMelBins; ++r)
        for (int t = 0; t < L; ++t) {
          ex.mel_target.at(r, static_cast<size_t>(t)) =
              mel.at(r, static_cast<size_t>(start + t));
          ex.mel_input.at(r, static_cast<size_t>(t)) =
              t == 0 ? 0.0 : mel.at(r, static_cast<size_t>(start + t - 1));
        }
      ex.linear_target =
          Tensor({kLinearBins, L * kLinearPerMel});
      for (size_t r = 0; r < kLinearBins; ++r)
        for (int t = 0; t < L * kLinearPerMel; ++t)
          ex.linear_target.at(r, static_cast<size_t>(t)) =
              lin.at(r, static_cast<size_t>(start * kLinearPerMel + t));
      const auto qseed = Rng(corpus.manifest.seed)
                             .fork(entry.song_id, static_cast<std::uint64_t>(si))
                             .next_u64();
      ex.query = sample_query_prefer_train(corpus, entry.singer_id, entry.song_id, qseed);
      out.push_back(std::move(ex));
      start += L;
    }
  }
  return out;
}

// Padded minibatch. mask is 1 on valid mel frames, 0 on padding; the linear
// stream reuses it at 4x resolution.
struct Batch {
  std::vector<size_t> example_index;
  std::vector<std::string> singer_ids;
  size_t max_frames = 0;
  std::vector<std::vector<int>> phoneme_ids;  // [B][Lmax], pad 0
  std::vector<std::vector<int>> pitch_ids;    // [B][Lmax], pad 0
  Tensor mel_input;                     // [B x 80 x Lmax]
  Tensor mel_target;                    // [B x 80 x Lmax]
  Tensor linear_target;                 // [B x 513 x 4*Lmax]
  Tensor query;                         // [B x 80 x 256]
  Tensor mask;                          // [B x Lmax]

  size_t size() const { return example_index.size(); }
};

// Singer-balanced epoch batching: each epoch walks a reshuffled singer ring,
// so per-singer counts inside a batch never differ by more than one, and
// every example of a singer is visited before any repeats. Queries are
// redrawn each epoch from the train split.
class BatchIterator {
 public:
  BatchIterator(const LoadedCorpus& corpus, const std::vector<TrainingExample>& examples,
                int batch_size, std::uint64_t seed)
      : corpus_(&corpus), examples_(&examples),
        batch_size_(static_cast<size_t>(batch_size)), seed_(seed) {
    if (batch_size < 1) throw InvalidConfig("batch_iterator: batch size must be >= 1");
    if (examples.empty()) throw InsufficientData("batch_iterator: no examples");
    std::map<std::string, std::vector<size_t>> by_singer;
    for (size_t i = 0; i < examples.size(); ++i)
      by_singer[examples[i].singer_id].push_back(i);
    for (auto& [singer, idx] : by_singer) {
      singers_.push_back(singer);
      groups_.push_back(std::move(idx));
    }
    batches_per_epoch_ = std::max<size_t>(1, examples.size() / batch_size_);
    start_epoch(0);
  }

  size_t batches_per_epoch() const { return batches_per_epoch_; }
  size_t epoch() const { return epoch_; }

  // Jump so the next call to next() returns batch number `global_batch`
  // (0-based) of the deterministic sequence. Only cursor arithmetic; no
  // tensors are assembled, so resuming mid-training is cheap.
  void seek(size_t global_batch) {
    start_epoch(global_batch / batches_per_epoch_);
    const size_t skip = global_batch % batches_per_epoch_;
    for (size_t b = 0; b < skip; ++b) {
      for (size_t k = 0; k < batch_size_; ++k) {
        const size_t s = ring_[ring_cursor_ % ring_.size()];
        ++ring_cursor_;
        ++cursors_[s];
      }
      ++batch_in_epoch_;
    }
  }

  Batch next() {
    if (batch_in_epoch_ == batches_per_epoch_) start_epoch(epoch_ + 1);

    std::vector<size_t> chosen;
    for (size_t b = 0; b < batch_size_; ++b) {
      const size_t s = ring_[ring_cursor_ % ring_.size()];
      ++ring_cursor_;
      auto& cur = cursors_[s];
      chosen.push_back(plans_[s][cur % plans_[s].size()]);
      ++cur;
    }
    ++batch_in_epoch_;
    return assemble(chosen);
  }

 private:
  void start_epoch(size_t e) {
    epoch_ = e;
    batch_in_epoch_ = 0;
    ring_cursor_ = 0;
    auto rng = Rng(seed_).fork("epoch", e);
    plans_ = groups_;
    for (size_t s = 0; s < plans_.size(); ++s) {
      auto r = rng.fork("singer", s);
      r.shuffle(plans_[s]);
    }
    ring_.resize(singers_.size());
    for (size_t s = 0; s < ring_.size(); ++s) ring_[s] = s;
    auto r = rng.fork("ring");
    r.shuffle(ring_);
    cursors_.assign(singers_.size(), 0);
  }

  Batch assemble(const std::vector<size_t>& chosen) {
    Batch batch;
    batch.example_index = chosen;
    batch.max_frames = 0;
    for (size_t i : chosen)
      batch.max_frames = std::max(batch.max_frames, (*examples_)[i].n_frames());
    const size_t B = chosen.size();
    const size_t L = batch.max_frames;
    batch.phoneme_ids.assign(B, std::vector<int>(L, 0));
    batch.pitch_ids.assign(B, std::vector<int>(L, 0));
    batch.mel_input = Tensor({static_cast<int>(B), kMelBins, static_cast<int>(L)});
    batch.mel_target = Tensor({static_cast<int>(B), kMelBins, static_cast<int>(L)});
    batch.linear_target =
        Tensor({static_cast<int>(B), kLinearBins, static_cast<int>(L) * kLinearPerMel});
    batch.query =
        Tensor({static_cast<int>(B), kMelBins, kQueryFrames});
    batch.mask = Tensor({static_cast<int>(B), static_cast<int>(L)});
    for (size_t b = 0; b < B; ++b) {
      const auto& ex = (*examples_)[chosen[b]];
      batch.singer_ids.push_back(ex.singer_id);
      const size_t n = ex.n_frames();
      for (size_t t = 0; t < n; ++t) {
        batch.phoneme_ids[b][t] = ex.phoneme_ids[t];
        batch.pitch_ids[b][t] = ex.pitch_ids[t];
        batch.mask.at(b, t) = 1.0;
      }
      for (size_t r = 0; r < kMelBins; ++r)
        for (size_t t = 0; t < n; ++t) {
          batch.mel_input.at(b, r, t) = ex.mel_input.at(r, t);
          batch.mel_target.at(b, r, t) = ex.mel_target.at(r, t);
        }
      for (size_t r = 0; r < kLinearBins; ++r)
        for (size_t t = 0; t < n * kLinearPerMel; ++t)
          batch.linear_target.at(b, r, t) = ex.linear_target.at(r, t);
      auto qseed = Rng(seed_).fork("query", epoch_, chosen[b]).next_u64();
      const auto q = sample_query_prefer_train(*corpus_, ex.singer_id, ex.song_id, qseed);
      for (size_t r = 0; r < kMelBins; ++r)
        for (size_t t = 0; t < kQueryFrames; ++t) batch.query.at(b, r, t) = q.at(r, t);
    }
    return batch;
  }

  const LoadedCorpus* corpus_;
  const std::vector<TrainingExample>* examples_;
  size_t batch_size_;
  std::uint64_t seed_;
  std::vector<std::string> singers_;
  std::vector<std::vector<size_t>> groups_;  // immutable example ids per singer
  std::vector<std::vector<size_t>> plans_;   // per-epoch shuffled copies
  std::vector<size_t> cursors_;
  std::vector<size_t> ring_;
  size_t ring_cursor_ = 0;
  size_t batches_per_epoch_ = 1;
  size_t batch_in_epoch_ = 0;
  size_t epoch_ = 0;
};

}  // namespace svs::corpus
