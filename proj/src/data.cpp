#include "amenable/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "amenable/errors.hpp"

namespace amenable {

using nlohmann::json;

std::string to_string(TaskKind k) {
  return k == TaskKind::classification ? "classification" : "segmentation";
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "classification") return TaskKind::classification;
  if (s == "segmentation") return TaskKind::segmentation;
  throw ParseError("unknown task_kind: " + s);
}

int ImageStore::append(std::span<const float> img) {
  if (static_cast<int>(img.size()) != pixels_per_image())
    throw ParseError("image size does not match store shape");
  int idx = count();
  pixels_.insert(pixels_.end(), img.begin(), img.end());
  return idx;
}

int Dataset::index_of(const std::string& sample_id) const {
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].id == sample_id) return static_cast<int>(i);
  throw ParseError("dangling sample id: " + sample_id);
}

std::vector<int> Dataset::split_indices(const std::string& split) const {
  auto it = splits.find(split);
  if (it == splits.end()) throw ParseError("unknown split: " + split);
  std::unordered_map<std::string, int> by_id;
  for (std::size_t i = 0; i < samples.size(); ++i)
    by_id.emplace(samples[i].id, static_cast<int>(i));
  std::vector<int> out;
  out.reserve(it->second.size());
  for (const auto& id : it->second) {
    auto f = by_id.find(id);
    if (f == by_id.end()) throw ParseError("dangling sample id: " + id);
    out.push_back(f->second);
  }
  return out;
}

void Dataset::validate() const {
  if (!images) throw ParseError("dataset has no image store");
  const int hw = images->pixels_per_image();
  std::set<std::string> seen_ids;
  for (const auto& s : samples) {
    if (!seen_ids.insert(s.id).second)
      throw ParseError("duplicate sample id: " + s.id);
    if (s.image_index < 0 || s.image_index >= images->count())
      throw ParseError("sample " + s.id + " references image out of range");
    for (float p : images->image(s.image_index))
      if (!(p >= 0.0f && p <= 1.0f))
        throw ParseError("pixel out of [0,1] in sample " + s.id);
    if (task_kind == TaskKind::segmentation) {
      if (static_cast<int>(s.mask.size()) != hw)
        throw ParseError("mask shape mismatch in sample " + s.id);
      for (auto v : s.mask)
        if (v > 1) throw ParseError("mask value not in {0,1} in sample " + s.id);
    } else if (!s.mask.empty()) {
      throw ParseError("classification sample " + s.id + " carries a mask");
    }
    if (s.corruption) {
      const auto& c = *s.corruption;
      if (c.noise_intensity < 0.0 || c.noise_intensity > 0.8 ||
          c.occlusion_intensity < 0.0 || c.occlusion_intensity > 1.0)
        throw ParseError("corruption intensities out of range in sample " + s.id);
    }
  }
  // split ids resolve, and splits are disjoint by sample id and subject id
  std::map<std::string, std::string> id_to_subject;
  for (const auto& s : samples) id_to_subject[s.id] = s.subject_id;
  std::map<std::string, std::string> id_owner;       // sample id -> split
  std::map<std::string, std::string> subject_owner;  // subject id -> split
  for (const auto& [name, ids] : splits) {
    if (name == "val" && ids.empty())
      throw ParseError("split \"val\" is empty (reward needs at least one sample)");
    std::set<std::string> in_split;
    for (const auto& id : ids) {
      auto f = id_to_subject.find(id);
      if (f == id_to_subject.end())
        throw ParseError("dangling sample id: " + id);
      if (!in_split.insert(id).second)
        throw ParseError("duplicate id " + id + " in split " + name);
      auto [it, fresh] = id_owner.emplace(id, name);
      if (!fresh)
        throw ParseError("sample " + id + " appears in splits " + it->second +
                         " and " + name);
      auto [sit, sfresh] = subject_owner.emplace(f->second, name);
      if (!sfresh && sit->second != name)
        throw ParseError("subject " + f->second + " appears in splits " +
                         sit->second + " and " + name);
    }
  }
}

bool Dataset::operator==(const Dataset& other) const {
  if (task_kind != other.task_kind) return false;
  if (!images || !other.images) return images == other.images;
  return *images == *other.images && samples == other.samples &&
         splits == other.splits;
}

void SynthSpec::validate() const {
  if (corrupt_fraction < 0.0 || corrupt_fraction > 1.0)
    throw ConfigError("corrupt_fraction must be in [0,1]");
  if (n_subjects < 3) throw ConfigError("need n_subjects >= 3 (one per split)");
  if (n_samples < n_subjects)
    throw ConfigError("need n_samples >= n_subjects");
  if (height < 8 || width < 8)
    throw ConfigError("shape too small to place a blob (need at least 8x8)");
  if (label_flip_prob < 0.0 || label_flip_prob > 1.0)
    throw ConfigError("label_flip_prob must be in [0,1]");
  if (train_fraction <= 0.0 || val_fraction <= 0.0 ||
      train_fraction + val_fraction >= 1.0)
    throw ConfigError("split fractions must be positive and sum below 1");
  if (noise_lo < 0.0 || noise_hi > 0.8 || noise_lo > noise_hi)
    throw ConfigError("noise intensity range must sit inside [0, 0.8]");
  if (occlusion_lo < 0.0 || occlusion_hi > 1.0 || occlusion_lo > occlusion_hi)
    throw ConfigError("occlusion intensity range must sit inside [0, 1]");
}

namespace {

struct Blob {
  double cx, cy, radius;
};

Blob place_blob(int height, int width, Rng& rng) {
  double r = rng.uniform(2.0, 3.0);
  double margin = r + 1.0;
  double cx = rng.uniform(margin, width - margin);
  double cy = rng.uniform(margin, height - margin);
  return {cx, cy, r};
}

void render_blob(std::vector<float>& img, int height, int width,
                 const Blob& b, double contrast) {
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double dx = x - b.cx, dy = y - b.cy;
      if (dx * dx + dy * dy <= b.radius * b.radius) {
        float& p = img[y * width + x];
        p = std::min(1.0f, p + static_cast<float>(contrast));
      }
    }
}

std::vector<std::uint8_t> blob_mask(int height, int width, const Blob& b) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(height) * width, 0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double dx = x - b.cx, dy = y - b.cy;
      if (dx * dx + dy * dy <= b.radius * b.radius) mask[y * width + x] = 1;
    }
  return mask;
}

// per-split corruption counts: floor(frac*n_k) per split, remainder up to the
// global floor(frac*n) assigned by largest fractional remainder
std::vector<int> corruption_counts(double frac,
                                   const std::vector<int>& split_sizes) {
  int total = static_cast<int>(std::floor(
      frac * std::accumulate(split_sizes.begin(), split_sizes.end(), 0)));
  std::vector<int> counts(split_sizes.size());
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (std::size_t k = 0; k < split_sizes.size(); ++k) {
    double exact = frac * split_sizes[k];
    counts[k] = static_cast<int>(std::floor(exact));
    assigned += counts[k];
    remainders.push_back({exact - counts[k], static_cast<int>(k)});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int i = 0; i < total - assigned; ++i) {
    int k = remainders[i % remainders.size()].second;
    if (counts[k] < split_sizes[k]) counts[k] += 1;
  }
  return counts;
}

}  // namespace

Dataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  Rng root(spec.seed);
  Rng subject_rng = root.child("subjects");
  Rng image_rng = root.child("images");
  Rng corrupt_rng = root.child("corruption");

  const int n = spec.n_samples;
  const int hw = spec.height * spec.width;

  // subjects split into train/val/holdout; samples assigned round-robin so
  // subject sample counts stay even
  std::vector<int> subject_order(spec.n_subjects);
  std::iota(subject_order.begin(), subject_order.end(), 0);
  subject_rng.shuffle(subject_order);
  int n_train_subj = std::max(
      1, static_cast<int>(std::llround(spec.train_fraction * spec.n_subjects)));
  int n_val_subj = std::max(
      1, static_cast<int>(std::llround(spec.val_fraction * spec.n_subjects)));
  if (n_train_subj + n_val_subj >= spec.n_subjects)
    n_train_subj = spec.n_subjects - n_val_subj - 1;
  if (n_train_subj < 1)
    throw ConfigError("split fractions leave no train subjects");
  std::vector<int> subject_split(spec.n_subjects);  // 0 train, 1 val, 2 holdout
  for (int i = 0; i < spec.n_subjects; ++i) {
    int s = subject_order[i];
    subject_split[s] = i < n_train_subj ? 0 : (i < n_train_subj + n_val_subj ? 1 : 2);
  }

  Dataset ds;
  ds.task_kind = spec.task_kind;
  auto store = std::make_shared<ImageStore>(spec.height, spec.width);

  struct Pending {
    Blob blob;
    bool has_blob;
  };
  std::vector<Pending> pending(n);
  const char* split_names[3] = {"train", "val", "holdout"};
  std::vector<std::vector<int>> split_members(3);

  for (int i = 0; i < n; ++i) {
    int subj = i % spec.n_subjects;
    Sample s;
    char idbuf[16], subjbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "x%05d", i);
    std::snprintf(subjbuf, sizeof subjbuf, "s%04d", subj);
    s.id = idbuf;
    s.subject_id = subjbuf;

    std::vector<float> img(hw);
    for (auto& p : img)
      p = static_cast<float>(image_rng.uniform(0.0, spec.background_level));

    bool has_blob = spec.task_kind == TaskKind::segmentation
                        ? true
                        : image_rng.bernoulli(0.5);
    Blob blob{0, 0, 0};
    if (has_blob) {
      blob = place_blob(spec.height, spec.width, image_rng);
      double contrast =
          image_rng.uniform(spec.blob_contrast_lo, spec.blob_contrast_hi);
      render_blob(img, spec.height, spec.width, blob, contrast);
    }
    if (spec.task_kind == TaskKind::classification) {
      s.class_label = has_blob ? 1 : 0;
    } else {
      s.mask = blob_mask(spec.height, spec.width, blob);
    }
    s.oracle_amenable = true;
    s.image_index = store->append(img);
    pending[i] = {blob, has_blob};
    ds.samples.push_back(std::move(s));
    split_members[subject_split[subj]].push_back(i);
  }

  // corrupt the same fraction of every split
  std::vector<int> sizes = {static_cast<int>(split_members[0].size()),
                            static_cast<int>(split_members[1].size()),
                            static_cast<int>(split_members[2].size())};
  std::vector<int> n_corrupt = corruption_counts(spec.corrupt_fraction, sizes);
  for (int k = 0; k < 3; ++k) {
    std::vector<int> order = split_members[k];
    corrupt_rng.shuffle(order);
    for (int j = 0; j < n_corrupt[k]; ++j) {
      int i = order[j];
      Sample& s = ds.samples[i];
      CorruptionRecord rec;
      rec.noise_intensity = corrupt_rng.uniform(spec.noise_lo, spec.noise_hi);
      rec.occlusion_intensity =
          corrupt_rng.uniform(spec.occlusion_lo, spec.occlusion_hi);
      rec.label_flipped = corrupt_rng.bernoulli(spec.label_flip_prob);
      rec.rng_seed = corrupt_rng.next_u64();
      auto corrupted =
          corrupt(store->image(s.image_index), spec.height, spec.width, rec);
      std::copy(corrupted.begin(), corrupted.end(),
                store->raw().begin() +
                    static_cast<std::size_t>(s.image_index) * hw);
      if (rec.label_flipped) {
        if (spec.task_kind == TaskKind::classification) {
          s.class_label = 1 - s.class_label;
        } else {
          // degraded label: mask of a blob somewhere else
          Rng mask_rng(rec.rng_seed ^ 0x6d61736bULL);
          Blob wrong = place_blob(spec.height, spec.width, mask_rng);
          s.mask = blob_mask(spec.height, spec.width, wrong);
        }
      }
      s.oracle_amenable = false;
      s.corruption = rec;
    }
  }

  for (int k = 0; k < 3; ++k) {
    std::vector<std::string> ids;
    ids.reserve(split_members[k].size());
    for (int i : split_members[k]) ids.push_back(ds.samples[i].id);
    ds.splits[split_names[k]] = std::move(ids);
  }

  ds.images = std::move(store);
  ds.validate();
  return ds;
}

std::vector<float> corrupt(std::span<const float> image, int height, int width,
                           const CorruptionRecord& record) {
  std::vector<float> out(image.begin(), image.end());
  const int hw = height * width;
  Rng rng(record.rng_seed);

  int k_noise =
      static_cast<int>(std::llround(record.noise_intensity * hw));
  if (k_noise > 0) {
    std::vector<int> idx(hw);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    for (int j = 0; j < k_noise; ++j)
      out[idx[j]] = static_cast<float>(rng.uniform01());
  }

  int k_occ =
      static_cast<int>(std::llround(record.occlusion_intensity * hw));
  if (k_occ > 0) {
    int block_w = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(k_occ))));
    block_w = std::max(block_w, (k_occ + height - 1) / height);
    block_w = std::min(block_w, width);
    int full_rows = k_occ / block_w;
    int rem = k_occ % block_w;
    int rows_needed = full_rows + (rem > 0 ? 1 : 0);
    int x0 = static_cast<int>(rng.uniform_int(width - block_w + 1));
    int y0 = static_cast<int>(rng.uniform_int(height - rows_needed + 1));
    for (int r = 0; r < full_rows; ++r)
      for (int c = 0; c < block_w; ++c) out[(y0 + r) * width + x0 + c] = 0.0f;
    for (int c = 0; c < rem; ++c)
      out[(y0 + full_rows) * width + x0 + c] = 0.0f;
  }
  return out;
}

namespace {

json corruption_to_json(const CorruptionRecord& c) {
  return json{{"noise_intensity", c.noise_intensity},
              {"occlusion_intensity", c.occlusion_intensity},
              {"label_flipped", c.label_flipped},
              {"rng_seed", c.rng_seed}};
}

CorruptionRecord corruption_from_json(const json& j) {
  CorruptionRecord c;
  c.noise_intensity = j.at("noise_intensity").get<double>();
  c.occlusion_intensity = j.at("occlusion_intensity").get<double>();
  c.label_flipped = j.at("label_flipped").get<bool>();
  c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  return c;
}

void write_file(const std::filesystem::path& path, const void* data,
                std::size_t bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ParseError("cannot write " + path.string());
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!f) throw ParseError("short write to " + path.string());
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw ParseError("cannot read " + path.string());
  auto size = f.tellg();
  f.seekg(0);
  std::vector<char> buf(static_cast<std::size_t>(size));
  f.read(buf.data(), size);
  if (!f) throw ParseError("short read from " + path.string());
  return buf;
}

}  // namespace

void save_manifest(const Dataset& dataset, const std::string& dir) {
  dataset.validate();
  std::filesystem::create_directories(dir);
  const int hw = dataset.images->pixels_per_image();

  json j;
  j["format"] = "amenable-dataset-v1";
  j["shape"] = {dataset.height(), dataset.width()};
  j["task_kind"] = to_string(dataset.task_kind);
  json samples = json::array();
  std::vector<float> image_blob;
  image_blob.reserve(dataset.samples.size() * hw);
  std::vector<std::uint8_t> mask_blob;
  int offset = 0;
  for (const auto& s : dataset.samples) {
    json js;
    js["id"] = s.id;
    js["subject_id"] = s.subject_id;
    if (dataset.task_kind == TaskKind::classification)
      js["label"] = s.class_label;
    else
      js["label"] = nullptr;  // mask lives in masks.u8 at the same offset
    js["oracle_amenable"] =
        s.oracle_amenable ? json(*s.oracle_amenable) : json(nullptr);
    js["corruption"] =
        s.corruption ? corruption_to_json(*s.corruption) : json(nullptr);
    js["offset"] = offset;
    samples.push_back(std::move(js));
    auto img = dataset.image_of(s);
    image_blob.insert(image_blob.end(), img.begin(), img.end());
    if (dataset.task_kind == TaskKind::segmentation)
      mask_blob.insert(mask_blob.end(), s.mask.begin(), s.mask.end());
    ++offset;
  }
  j["samples"] = std::move(samples);
  j["splits"] = dataset.splits;

  std::filesystem::path base(dir);
  {
    std::ofstream f(base / "manifest.json", std::ios::trunc);
    if (!f) throw ParseError("cannot write manifest.json in " + dir);
    f << j.dump(2) << "\n";
  }
  write_file(base / "images.f32le", image_blob.data(),
             image_blob.size() * sizeof(float));
  if (dataset.task_kind == TaskKind::segmentation)
    write_file(base / "masks.u8", mask_blob.data(), mask_blob.size());
}

Dataset load_manifest(const std::string& dir) {
  std::filesystem::path base(dir);
  json j;
  try {
    std::ifstream f(base / "manifest.json");
    if (!f) throw ParseError("cannot open manifest.json in " + dir);
    f >> j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed manifest.json: ") + e.what());
  }
  if (!j.contains("format") || j["format"] != "amenable-dataset-v1")
    throw ParseError("malformed header: missing or unknown format tag");
  if (!j.contains("shape") || !j["shape"].is_array() || j["shape"].size() != 2)
    throw ParseError("malformed header: bad shape");

  Dataset ds;
  int height = j["shape"][0].get<int>();
  int width = j["shape"][1].get<int>();
  if (height <= 0 || width <= 0) throw ParseError("malformed header: bad shape");
  ds.task_kind = task_kind_from_string(j.at("task_kind").get<std::string>());

  const int hw = height * width;
  auto image_bytes = read_file(base / "images.f32le");
  std::size_t n_samples = j.at("samples").size();
  if (image_bytes.size() != n_samples * hw * sizeof(float))
    throw ParseError("image blob size does not match manifest shape");
  std::vector<char> mask_bytes;
  if (ds.task_kind == TaskKind::segmentation) {
    mask_bytes = read_file(base / "masks.u8");
    if (mask_bytes.size() != n_samples * static_cast<std::size_t>(hw))
      throw ParseError("mask blob size does not match manifest shape");
  }

  auto store = std::make_shared<ImageStore>(height, width);
  store->raw().resize(n_samples * hw);
  std::memcpy(store->raw().data(), image_bytes.data(), image_bytes.size());

  try {
    for (const auto& js : j.at("samples")) {
      Sample s;
      s.id = js.at("id").get<std::string>();
      s.subject_id = js.at("subject_id").get<std::string>();
      s.image_index = js.at("offset").get<int>();
      if (s.image_index < 0 ||
          static_cast<std::size_t>(s.image_index) >= n_samples)
        throw ParseError("sample " + s.id + " offset out of range");
      if (ds.task_kind == TaskKind::classification)
        s.class_label = js.at("label").get<int>();
      else
        s.mask.assign(mask_bytes.begin() + static_cast<std::size_t>(s.image_index) * hw,
                      mask_bytes.begin() + static_cast<std::size_t>(s.image_index + 1) * hw);
      if (!js.at("oracle_amenable").is_null())
        s.oracle_amenable = js.at("oracle_amenable").get<bool>();
      if (!js.at("corruption").is_null())
        s.corruption = corruption_from_json(js.at("corruption"));
      ds.samples.push_back(std::move(s));
    }
    ds.splits = j.at("splits")
                    .get<std::map<std::string, std::vector<std::string>>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed manifest.json: ") + e.what());
  }
  ds.images = std::move(store);
  ds.validate();
  return ds;
}

}  // namespace amenable
