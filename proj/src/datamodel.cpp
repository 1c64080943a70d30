#include "semipair/datamodel.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include "semipair/rng.hpp"

namespace semipair {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "raw array files are little-endian");

std::string to_string(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw Error("unknown split '" + s + "'");
}

ModalityId SemiPairedDataset::modality(int64_t index) const {
  if (index < 0 || index >= modality_count()) {
    throw Error("modality index " + std::to_string(index) + " out of range");
  }
  return {index, modality_names[static_cast<size_t>(index)]};
}

const Sample& SemiPairedDataset::sample(const std::string& subject, int64_t modality) const {
  auto it = samples.find({subject, modality});
  if (it == samples.end()) {
    throw Error("no sample for subject '" + subject + "' modality " + std::to_string(modality));
  }
  return it->second;
}

const SubjectRecord& SemiPairedDataset::record(const std::string& subject) const {
  for (const auto& r : records) {
    if (r.subject_id == subject) return r;
  }
  throw Error("unknown subject '" + subject + "'");
}

std::vector<const SubjectRecord*> SemiPairedDataset::split_records(Split s) const {
  std::vector<const SubjectRecord*> out;
  for (const auto& r : records) {
    if (r.split == s) out.push_back(&r);
  }
  return out;
}

std::vector<const Sample*> SemiPairedDataset::split_samples(Split s) const {
  std::vector<const Sample*> out;
  for (const auto& r : records) {
    if (r.split != s) continue;
    for (int64_t m : r.modalities) out.push_back(&sample(r.subject_id, m));
  }
  return out;
}

namespace {

void check_balanced(const std::vector<SubjectRecord>& records, int64_t modality_count) {
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    std::vector<int64_t> counts(static_cast<size_t>(modality_count), 0);
    bool any = false;
    for (const auto& r : records) {
      if (r.split != s || r.paired) continue;
      ++counts[static_cast<size_t>(r.modalities.front())];
      any = true;
    }
    if (!any) continue;
    auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    if (*hi - *lo > 1) {
      throw Error("unpaired " + to_string(s) + " subjects are not balanced across modalities");
    }
  }
}

}  // namespace

void SemiPairedDataset::validate() const {
  if (height <= 0 || width <= 0) throw Error("dataset has invalid image size");
  if (modality_names.empty()) throw Error("dataset declares no modalities");
  std::set<std::string> ids;
  size_t referenced = 0;
  for (const auto& r : records) {
    if (!ids.insert(r.subject_id).second) throw Error("duplicate subject '" + r.subject_id + "'");
    if (r.modalities.empty()) throw Error("subject '" + r.subject_id + "' has no modalities");
    if (r.paired && r.modalities.size() < 2) {
      throw Error("paired subject '" + r.subject_id + "' needs at least two modalities");
    }
    if (!r.paired && r.modalities.size() != 1) {
      throw Error("unpaired subject '" + r.subject_id + "' must have exactly one modality");
    }
    if (r.paired && r.split != Split::Train) {
      throw Error("subject '" + r.subject_id + "': only training subjects may be paired");
    }
    for (int64_t m : r.modalities) {
      if (m < 0 || m >= modality_count()) {
        throw Error("subject '" + r.subject_id + "' references unknown modality " + std::to_string(m));
      }
      auto it = samples.find({r.subject_id, m});
      if (it == samples.end()) {
        throw Error("subject '" + r.subject_id + "' modality " + modality_names[static_cast<size_t>(m)] +
                    " has no stored sample");
      }
      ++referenced;
      const Sample& s = it->second;
      if (s.image.dim() != 2 || s.image.size(0) != height || s.image.size(1) != width ||
          s.image.scalar_type() != torch::kFloat32) {
        throw Error("subject '" + r.subject_id + "': image shape/type mismatch");
      }
      if (!torch::isfinite(s.image).all().item<bool>()) {
        throw Error("subject '" + r.subject_id + "': non-finite pixels");
      }
      if (s.image.min().item<float>() < -1.0f || s.image.max().item<float>() > 1.0f) {
        throw Error("subject '" + r.subject_id + "': pixels outside [-1, 1]");
      }
      if (s.mask) {
        const auto& mk = *s.mask;
        if (mk.dim() != 3 || mk.size(0) != region_count() || mk.size(1) != height || mk.size(2) != width ||
            mk.scalar_type() != torch::kUInt8) {
          throw Error("subject '" + r.subject_id + "': mask shape/type mismatch");
        }
        if (mk.gt(1).any().item<bool>()) throw Error("subject '" + r.subject_id + "': mask is not binary");
      }
    }
  }
  if (referenced != samples.size()) throw Error("dataset stores samples not referenced by any record");
  check_balanced(records, modality_count());
}

std::vector<SubjectRecord> plan_splits(const std::vector<SubjectRecord>& records, int64_t modality_count,
                                       int64_t n_train, int64_t n_val, int64_t n_test, int64_t n_paired,
                                       uint64_t seed) {
  if (n_train < 0 || n_val < 0 || n_test < 0 || n_paired < 0) throw Error("split counts must be non-negative");
  if (n_paired > n_train) throw Error("n_paired exceeds n_train");
  const auto total = static_cast<int64_t>(records.size());
  if (n_train + n_val + n_test > total) {
    throw Error("insufficient subjects: requested " + std::to_string(n_train + n_val + n_test) + ", have " +
                std::to_string(total));
  }
  for (const auto& r : records) {
    if (r.modalities.empty()) throw Error("subject '" + r.subject_id + "' offers no modalities");
    for (int64_t m : r.modalities) {
      if (m < 0 || m >= modality_count) throw Error("subject '" + r.subject_id + "' has invalid modality");
    }
  }

  std::vector<size_t> order(records.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  shuffle(order, rng);

  std::vector<SubjectRecord> out;
  out.reserve(static_cast<size_t>(n_train + n_val + n_test));
  std::vector<int64_t> counts(static_cast<size_t>(modality_count), 0);

  auto reduce_to_one = [&](SubjectRecord r) {
    int64_t best = r.modalities.front();
    for (int64_t m : r.modalities) {
      if (counts[static_cast<size_t>(m)] < counts[static_cast<size_t>(best)]) best = m;
    }
    ++counts[static_cast<size_t>(best)];
    r.modalities = {best};
    r.paired = false;
    return r;
  };

  // Train: paired subjects first (need >= 2 modalities), then unpaired.
  std::vector<SubjectRecord> train(static_cast<size_t>(n_train));
  for (int64_t i = 0; i < n_train; ++i) train[static_cast<size_t>(i)] = records[order[static_cast<size_t>(i)]];
  std::stable_partition(train.begin(), train.end(), [](const SubjectRecord& r) { return r.modalities.size() >= 2; });
  const auto multi = std::count_if(train.begin(), train.end(), [](const auto& r) { return r.modalities.size() >= 2; });
  if (multi < n_paired) {
    throw Error("insufficient subjects with two or more modalities for " + std::to_string(n_paired) +
                " paired subjects");
  }
  for (int64_t i = 0; i < n_train; ++i) {
    SubjectRecord r = train[static_cast<size_t>(i)];
    r.split = Split::Train;
    if (i < n_paired) {
      std::sort(r.modalities.begin(), r.modalities.end());
      r.paired = true;
      out.push_back(std::move(r));
    } else {
      out.push_back(reduce_to_one(std::move(r)));
    }
  }

  int64_t cursor = n_train;
  for (auto [split, n] : {std::pair{Split::Val, n_val}, std::pair{Split::Test, n_test}}) {
    std::fill(counts.begin(), counts.end(), 0);
    for (int64_t i = 0; i < n; ++i, ++cursor) {
      SubjectRecord r = records[order[static_cast<size_t>(cursor)]];
      r.split = split;
      out.push_back(reduce_to_one(std::move(r)));
    }
  }
  check_balanced(out, modality_count);
  return out;
}

torch::Tensor expand_modality_label(const ModalityId& m, int64_t modality_count, int64_t height, int64_t width) {
  if (m.index < 0 || m.index >= modality_count) throw Error("modality index out of range");
  auto label = torch::zeros({modality_count, height, width}, torch::kFloat32);
  label[m.index].fill_(1.0f);
  return label;
}

torch::Tensor expand_modality_labels(const torch::Tensor& indices, int64_t modality_count, int64_t height,
                                     int64_t width, torch::ScalarType dtype) {
  auto idx = indices.to(torch::kLong);
  if (idx.dim() != 1) throw Error("modality indices must be a 1-D tensor");
  if (idx.numel() > 0 && (idx.min().item<int64_t>() < 0 || idx.max().item<int64_t>() >= modality_count)) {
    throw Error("modality index out of range");
  }
  auto onehot = torch::one_hot(idx, modality_count).to(dtype);
  return onehot.view({idx.size(0), modality_count, 1, 1}).expand({idx.size(0), modality_count, height, width}).contiguous();
}

// ---------------------------------------------------------------------------
// On-disk format

namespace {

void check_name(const std::string& s, const char* what) {
  if (s.empty()) throw Error(std::string(what) + " must not be empty");
  for (char c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_';
    if (!ok) throw Error(std::string(what) + " '" + s + "' contains characters unsafe for file names");
  }
}

std::string sample_stem(const SemiPairedDataset& ds, const std::string& subject, int64_t m) {
  return subject + "_" + ds.modality_names[static_cast<size_t>(m)];
}

void write_raw(const fs::path& path, const torch::Tensor& t) {
  auto c = t.contiguous();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f.write(static_cast<const char*>(c.data_ptr()), static_cast<std::streamsize>(c.nbytes()));
  if (!f) throw Error("write failed for " + path.string());
}

torch::Tensor read_raw(const fs::path& path, torch::IntArrayRef shape, torch::ScalarType type,
                       const std::string& subject) {
  std::error_code ec;
  if (!fs::exists(path, ec)) throw Error("subject '" + subject + "': missing file " + path.string());
  auto t = torch::empty(shape, type);
  const auto expected = static_cast<uintmax_t>(t.nbytes());
  if (fs::file_size(path) != expected) {
    throw Error("subject '" + subject + "': " + path.filename().string() + " has " +
                std::to_string(fs::file_size(path)) + " bytes, manifest implies " + std::to_string(expected));
  }
  std::ifstream f(path, std::ios::binary);
  f.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(expected));
  if (!f) throw Error("subject '" + subject + "': read failed for " + path.string());
  return t;
}

json style_to_json(const ModalityStyle& s) {
  return {{"name", s.name},   {"bias", s.bias},          {"gain", s.gain},
          {"gamma", s.gamma}, {"edema_sign", s.edema_sign}, {"core_sign", s.core_sign}};
}

ModalityStyle style_from_json(const json& j) {
  ModalityStyle s;
  s.name = j.at("name").get<std::string>();
  s.bias = j.at("bias").get<double>();
  s.gain = j.at("gain").get<double>();
  s.gamma = j.at("gamma").get<double>();
  s.edema_sign = j.at("edema_sign").get<int>();
  s.core_sign = j.at("core_sign").get<int>();
  return s;
}

}  // namespace

json manifest_json(const SemiPairedDataset& ds) {
  json recs = json::array();
  for (const auto& r : ds.records) {
    const bool masks = std::all_of(r.modalities.begin(), r.modalities.end(),
                                   [&](int64_t m) { return ds.sample(r.subject_id, m).mask.has_value(); });
    recs.push_back({{"subject_id", r.subject_id},
                    {"paired", r.paired},
                    {"split", to_string(r.split)},
                    {"modalities", r.modalities},
                    {"masks", masks},
                    {"content", ds.content.count(r.subject_id) > 0}});
  }
  json j{{"format", "semipair-dataset"},
         {"version", 1},
         {"M", ds.modality_count()},
         {"modality_names", ds.modality_names},
         {"H", ds.height},
         {"W", ds.width},
         {"regions", ds.region_names},
         {"config_hash", ds.config_hash},
         {"records", recs}};
  if (!ds.styles.empty()) {
    json styles = json::array();
    for (const auto& s : ds.styles) styles.push_back(style_to_json(s));
    j["styles"] = styles;
  }
  return j;
}

void save_dataset(const SemiPairedDataset& ds, const fs::path& root) {
  ds.validate();
  for (const auto& n : ds.modality_names) check_name(n, "modality name");
  for (const auto& r : ds.records) check_name(r.subject_id, "subject id");
  fs::create_directories(root / "data");
  for (const auto& r : ds.records) {
    for (int64_t m : r.modalities) {
      const Sample& s = ds.sample(r.subject_id, m);
      const std::string stem = sample_stem(ds, r.subject_id, m);
      write_raw(root / "data" / (stem + ".f32"), s.image);
      if (s.mask) write_raw(root / "data" / (stem + ".mask.u8"), *s.mask);
    }
    if (auto it = ds.content.find(r.subject_id); it != ds.content.end()) {
      write_raw(root / "data" / (r.subject_id + ".content.f32"), it->second);
    }
  }
  std::ofstream f(root / "manifest.json");
  if (!f) throw Error("cannot write manifest in " + root.string());
  f << manifest_json(ds).dump(2) << "\n";
}

SemiPairedDataset load_dataset(const fs::path& root) {
  const fs::path manifest_path = root / "manifest.json";
  std::ifstream f(manifest_path);
  if (!f) throw Error("missing manifest: " + manifest_path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw Error("malformed manifest: " + std::string(e.what()));
  }

  SemiPairedDataset ds;
  try {
    if (j.at("format").get<std::string>() != "semipair-dataset" || j.at("version").get<int>() != 1) {
      throw Error("unsupported manifest format/version");
    }
    ds.height = j.at("H").get<int64_t>();
    ds.width = j.at("W").get<int64_t>();
    ds.modality_names = j.at("modality_names").get<std::vector<std::string>>();
    if (j.at("M").get<int64_t>() != ds.modality_count()) throw Error("manifest M disagrees with modality_names");
    ds.region_names = j.at("regions").get<std::vector<std::string>>();
    ds.config_hash = j.value("config_hash", std::string("external"));
    if (j.contains("styles")) {
      for (const auto& s : j["styles"]) ds.styles.push_back(style_from_json(s));
    }
    for (const auto& jr : j.at("records")) {
      SubjectRecord r;
      r.subject_id = jr.at("subject_id").get<std::string>();
      r.paired = jr.at("paired").get<bool>();
      r.split = split_from_string(jr.at("split").get<std::string>());
      r.modalities = jr.at("modalities").get<std::vector<int64_t>>();
      check_name(r.subject_id, "subject id");
      const bool masks = jr.value("masks", false);
      for (int64_t m : r.modalities) {
        const auto mod = ds.modality(m);
        const std::string stem = sample_stem(ds, r.subject_id, m);
        Sample s{r.subject_id, mod, read_raw(root / "data" / (stem + ".f32"), {ds.height, ds.width}, torch::kFloat32,
                                             r.subject_id),
                 std::nullopt};
        if (torch::isnan(s.image).any().item<bool>()) {
          throw Error("subject '" + r.subject_id + "': NaN pixels in " + stem + ".f32");
        }
        if (masks) {
          s.mask = read_raw(root / "data" / (stem + ".mask.u8"), {ds.region_count(), ds.height, ds.width},
                            torch::kUInt8, r.subject_id);
        }
        ds.samples.emplace(SemiPairedDataset::Key{r.subject_id, m}, std::move(s));
      }
      if (jr.value("content", false)) {
        ds.content[r.subject_id] = read_raw(root / "data" / (r.subject_id + ".content.f32"),
                                            {ds.height, ds.width}, torch::kFloat32, r.subject_id);
      }
      ds.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw Error("manifest schema error: " + std::string(e.what()));
  }
  ds.validate();
  return ds;
}

}  // namespace semipair
