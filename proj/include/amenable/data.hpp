#ifndef AMENABLE_DATA_HPP_
#define AMENABLE_DATA_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amenable/rng.hpp"

namespace amenable {

enum class TaskKind { classification, segmentation };

std::string to_string(TaskKind k);
TaskKind task_kind_from_string(const std::string& s);

// How a sample was degraded at generation time. Replaying the same record on
// the same image reproduces the corruption exactly.
struct CorruptionRecord {
  double noise_intensity = 0.0;      // [0, 0.8] fraction of pixels randomized
  double occlusion_intensity = 0.0;  // [0, 1.0] fraction of pixels zeroed
  bool label_flipped = false;
  std::uint64_t rng_seed = 0;

  bool operator==(const CorruptionRecord&) const = default;
};

// Immutable pixel storage shared between datasets that differ only in labels.
class ImageStore {
 public:
  ImageStore(int height, int width) : height_(height), width_(width) {}

  int height() const { return height_; }
  int width() const { return width_; }
  int pixels_per_image() const { return height_ * width_; }
  int count() const {
    return static_cast<int>(pixels_.size()) / pixels_per_image();
  }

  std::span<const float> image(int index) const {
    return {pixels_.data() + static_cast<std::size_t>(index) * pixels_per_image(),
            static_cast<std::size_t>(pixels_per_image())};
  }

  int append(std::span<const float> img);

  const std::vector<float>& raw() const { return pixels_; }
  std::vector<float>& raw() { return pixels_; }

  bool operator==(const ImageStore&) const = default;

 private:
  int height_;
  int width_;
  std::vector<float> pixels_;
};

struct Sample {
  std::string id;
  std::string subject_id;
  int image_index = -1;
  int class_label = 0;                 // classification
  std::vector<std::uint8_t> mask;      // segmentation; empty otherwise
  std::optional<bool> oracle_amenable;
  std::optional<CorruptionRecord> corruption;

  bool operator==(const Sample&) const = default;
};

class Dataset {
 public:
  TaskKind task_kind = TaskKind::classification;
  std::shared_ptr<const ImageStore> images;
  std::vector<Sample> samples;
  // split name -> sample ids, order-preserving within a split
  std::map<std::string, std::vector<std::string>> splits;

  int height() const { return images->height(); }
  int width() const { return images->width(); }

  std::span<const float> image_of(const Sample& s) const {
    return images->image(s.image_index);
  }
  std::span<const float> image_of(int sample_index) const {
    return images->image(samples[sample_index].image_index);
  }

  int index_of(const std::string& sample_id) const;
  // resolved sample indices for a split; throws ParseError on unknown split
  std::vector<int> split_indices(const std::string& split) const;

  // checks pixel ranges, split disjointness (by id and subject), dangling ids,
  // mask shapes; throws ParseError on violation
  void validate() const;

  bool operator==(const Dataset& other) const;
};

// Generation recipe for the synthetic blob task. Clean samples hold a bright
// blob (classification: present/absent; segmentation: blob mask); corrupted
// samples get noise + occlusion and, with label_flip_prob, a wrong label.
struct SynthSpec {
  int n_samples = 1000;
  int n_subjects = 100;
  int height = 16;
  int width = 16;
  TaskKind task_kind = TaskKind::classification;
  double corrupt_fraction = 0.3;
  std::uint64_t seed = 0;

  // plumbing knobs
  double label_flip_prob = 1.0;    // P(flip | corrupted)
  double train_fraction = 0.7;
  double val_fraction = 0.15;      // holdout gets the remainder
  double noise_lo = 0.15, noise_hi = 0.8;
  double occlusion_lo = 0.15, occlusion_hi = 1.0;
  double blob_contrast_lo = 0.35, blob_contrast_hi = 0.8;
  double background_level = 0.3;   // background pixels ~ U[0, background_level]

  void validate() const;  // throws ConfigError
};

Dataset generate_synthetic(const SynthSpec& spec);

// Pure: same (image, record) -> same output. Noise replaces exactly
// round(noise_intensity*H*W) distinct pixels with U[0,1) draws, then a
// contiguous block of round(occlusion_intensity*H*W) pixels is zeroed.
std::vector<float> corrupt(std::span<const float> image, int height, int width,
                           const CorruptionRecord& record);

// Manifest layout inside `dir`: manifest.json + images.f32le (+ masks.u8 for
// segmentation). Round-trips bit-exactly.
void save_manifest(const Dataset& dataset, const std::string& dir);
Dataset load_manifest(const std::string& dir);

}  // namespace amenable

#endif  // AMENABLE_DATA_HPP_
