#include "longiseg/core.hpp"

#include <stdexcept>

namespace longiseg {

namespace {

template <typename A, typename B>
void require_plane(const Image<A>& target, const Image<B>& other, const char* name) {
  if (target.extents() != other.extents()) {
    throw ShapeError(std::string("assemble_input: ") + name + " is " + extents_string(other.extents()) +
                     ", expected " + extents_string(target.extents()));
  }
}

void copy_into(std::span<float> dst, std::span<const float> src) { std::copy(src.begin(), src.end(), dst.begin()); }

}  // namespace

InputStack assemble_input(const Image<float>& reference, const LabelImage& reference_seg,
                          const Image<float>& target, const Image<float>* previous_max_prob,
                          const LabelImage* previous_labels, const EditMask<2>* edits) {
  require_plane(target, reference, "reference");
  require_plane(target, reference_seg, "reference_seg");
  if (previous_max_prob) require_plane(target, *previous_max_prob, "previous_prob");
  if (previous_labels) require_plane(target, *previous_labels, "previous_labels");
  if (edits) {
    for (const auto& ch : edits->channels) require_plane(target, ch, "edits");
  }

  InputStack stack(target.extent(0), target.extent(1));
  copy_into(stack.channel(InputChannel::kReferenceImage), reference.values());
  copy_into(stack.channel(InputChannel::kTargetImage), target.values());

  auto seg = reference_seg.values();
  auto ggo = stack.channel(InputChannel::kReferenceGGO);
  auto cons = stack.channel(InputChannel::kReferenceCONS);
  for (std::size_t i = 0; i < seg.size(); ++i) {
    ggo[i] = seg[i] == kGGO ? 1.0f : 0.0f;
    cons[i] = seg[i] == kCONS ? 1.0f : 0.0f;
  }

  if (previous_max_prob) copy_into(stack.channel(InputChannel::kPreviousMaxProb), previous_max_prob->values());
  if (previous_labels) {
    auto src = previous_labels->values();
    auto dst = stack.channel(InputChannel::kPreviousLabels);
    for (std::size_t i = 0; i < src.size(); ++i) {
      dst[i] = static_cast<float>(src[i]) / static_cast<float>(kForegroundClasses);
    }
  }
  if (edits) {
    for (int c = 0; c < kForegroundClasses; ++c) {
      auto src = edits->channels[c].values();
      auto dst = stack.channel(static_cast<int>(InputChannel::kEditGGO) + c);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i]);
    }
  }
  return stack;
}

InputStack assemble_input(const Image<float>& reference, const LabelImage& reference_seg,
                          const Image<float>& target, const ProbMap<2>* previous_prob,
                          const LabelImage* previous_labels, const EditMask<2>* edits) {
  if (!previous_prob) {
    return assemble_input(reference, reference_seg, target, static_cast<const Image<float>*>(nullptr),
                          previous_labels, edits);
  }
  const auto argmax = labels_from_probs(*previous_prob);
  return assemble_input(reference, reference_seg, target, &argmax.max_prob, previous_labels, edits);
}

std::string_view plane_name(Plane p) {
  switch (p) {
    case Plane::kAxial: return "axial";
    case Plane::kCoronal: return "coronal";
    case Plane::kSagittal: return "sagittal";
  }
  return "axial";
}

Plane parse_plane(std::string_view name) {
  if (name == "axial") return Plane::kAxial;
  if (name == "coronal") return Plane::kCoronal;
  if (name == "sagittal") return Plane::kSagittal;
  throw std::invalid_argument("unknown plane '" + std::string(name) + "'");
}

FusedPrediction fuse_views(const ProbMap<3>& axial, const ProbMap<3>& coronal, const ProbMap<3>& sagittal) {
  for (int c = 0; c < kNumClasses; ++c) {
    require_same_extents(axial.probs[c], coronal.probs[c], "fuse_views axial vs coronal");
    require_same_extents(axial.probs[c], sagittal.probs[c], "fuse_views axial vs sagittal");
  }
  ProbMap<3> fused(axial.extents());
  for (int c = 0; c < kNumClasses; ++c) {
    auto a = axial.probs[c].values();
    auto b = coronal.probs[c].values();
    auto s = sagittal.probs[c].values();
    auto o = fused.probs[c].values();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(o.size()); ++i) {
      float x = a[i], y = b[i], z = s[i];
      if (x > y) std::swap(x, y);
      if (y > z) std::swap(y, z);
      if (x > y) std::swap(x, y);
      o[i] = ((x + y) + z) / 3.0f;
    }
  }
  auto argmax = labels_from_probs(fused);
  return {std::move(fused), std::move(argmax.labels)};
}

}  // namespace longiseg
