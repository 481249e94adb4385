#include <cmath>
#include <cstdio>

#include "nfb/dataset.h"
#include "nfb/error.h"
#include "nfb/prng.h"

namespace nfb {

void SynthSpec::Validate() const {
  if (num_classes == 0 || objects_per_class == 0 || views_per_object == 0) {
    Fail(ErrorKind::kValidationError,
         "classes, objects per class and views per object must all be positive");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    Fail(ErrorKind::kValidationError, "noise sigma must be finite and >= 0");
  }
  if (nerf_dim == 0 || clip_dim == 0) {
    Fail(ErrorKind::kValidationError, "embedding dims must be positive");
  }
}

nlohmann::ordered_json SynthSpec::ToJson() const {
  return {{"generator", "nfbridge-synthetic"},
          {"num_classes", num_classes},
          {"objects_per_class", objects_per_class},
          {"views_per_object", views_per_object},
          {"rendered_per_object", rendered_per_object},
          {"generated_per_object", generated_per_object},
          {"noise_sigma", noise_sigma},
          {"seed", seed},
          {"nerf_dim", nerf_dim},
          {"clip_dim", clip_dim}};
}

namespace {

Vector UnitGaussian(Xoshiro256& rng, std::size_t dim) {
  std::vector<double> raw(dim);
  double sq = 0.0;
  for (auto& x : raw) {
    x = rng.Normal();
    sq += x * x;
  }
  const double norm = std::sqrt(sq);
  Vector out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(raw[i] / norm);
  return out;
}

Vector Perturb(const Vector& anchor, Xoshiro256& rng, double sigma) {
  Vector out(anchor.dim());
  for (std::size_t i = 0; i < anchor.dim(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(anchor[i]) + sigma * rng.Normal());
  }
  return out;
}

std::string ClassName(std::size_t c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "class_%03zu", c);
  return buf;
}

std::string ObjectId(std::size_t c, std::size_t o) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "c%03zu_o%05zu", c, o);
  return buf;
}

}  // namespace

Dataset GenerateSynthetic(const SynthSpec& spec) {
  spec.Validate();
  Xoshiro256 rng(spec.seed);

  Dataset d;
  d.nerf_dim = spec.nerf_dim;
  d.clip_dim = spec.clip_dim;
  d.provenance = spec.ToJson();

  std::vector<Vector> clip_anchors;
  std::vector<Vector> nerf_anchors;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    d.classes.push_back(ClassName(c));
    clip_anchors.push_back(UnitGaussian(rng, spec.clip_dim));
    nerf_anchors.push_back(UnitGaussian(rng, spec.nerf_dim));
    d.anchors.push_back({d.classes.back(), clip_anchors.back()});
  }

  const double sigma = spec.noise_sigma;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t o = 0; o < spec.objects_per_class; ++o) {
      ObjectRecord r;
      r.id = ObjectId(c, o);
      r.class_label = d.classes[c];
      r.nerf_embedding = Perturb(nerf_anchors[c], rng, sigma);
      auto add_views = [&](std::size_t count, ViewSource source) {
        for (std::size_t v = 0; v < count; ++v) {
          r.views.push_back({Perturb(clip_anchors[c], rng, sigma), source});
        }
      };
      add_views(spec.views_per_object, ViewSource::kGroundTruth);
      add_views(spec.rendered_per_object, ViewSource::kRendered);
      add_views(spec.generated_per_object, ViewSource::kGenerated);
      r.caption_embedding = Perturb(clip_anchors[c], rng, sigma);
      d.records.push_back(std::move(r));
    }
  }

  const std::size_t n = d.records.size();
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  const auto order = Permutation(n, rng);
  for (std::size_t rank = 0; rank < n; ++rank) {
    auto& r = d.records[order[rank]];
    r.split = rank < n_train ? Split::kTrain : rank < n_train + n_val ? Split::kVal : Split::kTest;
  }
  return d;
}

}  // namespace nfb
