#include "ddunet/data/subject.hpp"

#include <algorithm>
#include <cmath>

#include "ddunet/data/nifti.hpp"
#include "ddunet/engine/error.hpp"
#include "ddunet/engine/tensor_ops.hpp"

namespace ddunet::data {
namespace fs = std::filesystem;

namespace {

constexpr double kStdFloor = 1e-6;

std::array<std::size_t, 3> file_to_volume(std::array<std::size_t, 3> d) { return {d[2], d[1], d[0]}; }

fs::path find_volume(const fs::path& dir, const std::string& stem) {
  for (const char* ext : {".nii.gz", ".nii"}) {
    fs::path p = dir / (stem + ext);
    if (fs::exists(p)) return p;
  }
  throw DataError("missing volume '" + stem + ".nii(.gz)' in '" + dir.string() + "'");
}

}  // namespace

void Subject::validate() const {
  const std::size_t n = voxels();
  if (n == 0) throw ShapeError("subject '" + id + "': empty volume");
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    if (modalities[m].size() != n) {
      throw ShapeError("subject '" + id + "': modality " + kModalityNames[m] + " extent mismatch");
    }
  }
  if (mask.size() != n) throw ShapeError("subject '" + id + "': mask extent mismatch");
}

std::vector<std::uint8_t> remap_labels(const std::vector<std::uint8_t>& raw) {
  std::vector<std::uint8_t> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    switch (raw[i]) {
      case 0:
      case 1:
      case 2:
        out[i] = raw[i];
        break;
      case 4:
        out[i] = 3;
        break;
      default:
        throw DataError("unexpected raw label " + std::to_string(raw[i]) + " (expected {0,1,2,4})");
    }
  }
  return out;
}

std::vector<std::uint8_t> unmap_labels(const std::vector<std::uint8_t>& remapped) {
  std::vector<std::uint8_t> out(remapped.size());
  for (std::size_t i = 0; i < remapped.size(); ++i) {
    if (remapped[i] > 3) throw DataError("label " + std::to_string(remapped[i]) + " outside {0,1,2,3}");
    out[i] = remapped[i] == 3 ? 4 : remapped[i];
  }
  return out;
}

std::vector<std::uint8_t> remapped_mask(const Subject& subject) {
  if (subject.labels == LabelConvention::kRawBrats) return remap_labels(subject.mask);
  for (std::uint8_t l : subject.mask) {
    if (l > 3) throw DataError("subject '" + subject.id + "': label " + std::to_string(l) + " outside {0,1,2,3}");
  }
  return subject.mask;
}

Tensor<float> one_hot(const std::vector<std::uint8_t>& labels, std::array<std::size_t, 3> dims) {
  const std::size_t n = dims[0] * dims[1] * dims[2];
  if (labels.size() != n) throw ShapeError("one_hot: label count does not match dims");
  Tensor<float> out({4, dims[0], dims[1], dims[2]});
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] > 3) throw DataError("one_hot: label " + std::to_string(labels[i]) + " outside {0,1,2,3}");
    out[labels[i] * n + i] = 1.0f;
  }
  return out;
}

bool is_one_hot(const Tensor<float>& target) {
  if (target.rank() != 4 || target.extent(0) != 4) return false;
  const std::size_t n = target.numel() / 4;
  for (std::size_t i = 0; i < n; ++i) {
    int ones = 0;
    for (std::size_t c = 0; c < 4; ++c) {
      const float v = target[c * n + i];
      if (v == 1.0f) {
        ++ones;
      } else if (v != 0.0f) {
        return false;
      }
    }
    if (ones != 1) return false;
  }
  return true;
}

Sample preprocess_subject(const Subject& subject, std::array<std::size_t, 3> crop_to) {
  subject.validate();
  const Shape dims{subject.dims[0], subject.dims[1], subject.dims[2]};
  const Shape target{crop_to[0], crop_to[1], crop_to[2]};
  for (std::size_t a = 0; a < 3; ++a) {
    if (crop_to[a] == 0 || dims[a] < crop_to[a]) {
      throw ShapeError("subject '" + subject.id + "': extents " + shape_to_string(dims) +
                       " smaller than crop target " + shape_to_string(target));
    }
  }
  const std::vector<std::size_t> starts = centered_starts(dims, target);
  const std::size_t n = crop_to[0] * crop_to[1] * crop_to[2];

  auto crop_index = [&](std::size_t d, std::size_t h, std::size_t w) {
    return ((starts[0] + d) * dims[1] + starts[1] + h) * dims[2] + starts[2] + w;
  };

  Sample s{Tensor<float>({4, crop_to[0], crop_to[1], crop_to[2]}), {}};
  std::vector<double> buf(n);
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    const std::vector<float>& src = subject.modalities[m];
    std::size_t k = 0;
    for (std::size_t d = 0; d < crop_to[0]; ++d) {
      for (std::size_t h = 0; h < crop_to[1]; ++h) {
        for (std::size_t w = 0; w < crop_to[2]; ++w) buf[k++] = src[crop_index(d, h, w)];
      }
    }
    double mean = 0.0;
    for (double v : buf) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : buf) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double sd = std::max(std::sqrt(var), kStdFloor);
    float* dst = s.image.data().data() + m * n;
    for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>((buf[i] - mean) / sd);
  }

  const std::vector<std::uint8_t> mask = remapped_mask(subject);
  std::vector<std::uint8_t> cropped(n);
  std::size_t k = 0;
  for (std::size_t d = 0; d < crop_to[0]; ++d) {
    for (std::size_t h = 0; h < crop_to[1]; ++h) {
      for (std::size_t w = 0; w < crop_to[2]; ++w) cropped[k++] = mask[crop_index(d, h, w)];
    }
  }
  s.target = one_hot(cropped, crop_to);
  return s;
}

Subject load_subject(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("subject directory '" + dir.string() + "' not found");
  Subject s;
  s.id = dir.filename().string();
  if (s.id.empty()) s.id = dir.parent_path().filename().string();
  s.labels = LabelConvention::kRawBrats;
  std::array<std::size_t, 3> file_dims{};
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    const NiftiVolume v = load_nifti(find_volume(dir, s.id + "_" + kModalityNames[m]));
    if (m == 0) {
      file_dims = v.dims;
    } else if (v.dims != file_dims) {
      throw DataError("subject '" + s.id + "': modality " + kModalityNames[m] + " extents differ");
    }
    s.modalities[m] = v.values<float>();
  }
  const NiftiVolume seg = load_nifti(find_volume(dir, s.id + "_seg"));
  if (seg.dims != file_dims) throw DataError("subject '" + s.id + "': segmentation extents differ");
  const std::vector<float> labels = seg.values<float>();
  s.mask.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const float l = labels[i];
    if (!(l >= 0.0f && l <= 255.0f) || l != std::floor(l)) {
      throw DataError("subject '" + s.id + "': non-integer label value in segmentation");
    }
    s.mask[i] = static_cast<std::uint8_t>(l);
  }
  s.dims = file_to_volume(file_dims);
  s.validate();
  return s;
}

void save_subject(const Subject& subject, const fs::path& root) {
  subject.validate();
  const fs::path dir = root / subject.id;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create '" + dir.string() + "': " + ec.message());
  const std::array<std::size_t, 3> file_dims = file_to_volume(subject.dims);
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    save_nifti(NiftiVolume::from_float32(file_dims, subject.modalities[m]),
               dir / (subject.id + "_" + kModalityNames[m] + ".nii.gz"));
  }
  const std::vector<std::uint8_t> raw =
      subject.labels == LabelConvention::kRawBrats ? subject.mask : unmap_labels(subject.mask);
  save_nifti(NiftiVolume::from_uint8(file_dims, raw), dir / (subject.id + "_seg.nii.gz"));
}

std::vector<fs::path> list_subjects(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset directory '" + root.string() + "' not found");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError("dataset directory '" + root.string() + "' contains no subjects");
  return out;
}

}  // namespace ddunet::data
