#pragma once

// Canonical JSON serialization of body trees.  Every body serializes to
// {"kind": ..., "dim": ..., "params": {...}, "children": [...]} with params
// keys in sorted order; serializing, parsing and serializing again yields a
// byte-identical string.  Serialization always reflects the tree the body was
// constructed with, not any internally simplified form.

#include "gbm/bodies.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace gbm {

using ordered_json = nlohmann::ordered_json;

inline ordered_json body_to_json(const Body& b) {
  ordered_json j;
  j["kind"] = kind_name(b.kind());
  j["dim"] = b.dim();
  ordered_json params = ordered_json::object();
  switch (b.kind()) {
    case BodyKind::kBall:
      params["radius"] = b.radius();
      break;
    case BodyKind::kBox:
      params["half_widths"] = b.half_widths();
      break;
    case BodyKind::kEllipsoid:
      params["semi_axes"] = b.semi_axes();
      break;
    case BodyKind::kSymPolytope: {
      ordered_json verts = ordered_json::array();
      for (int v = 0; v < b.vertex_count(); ++v) {
        ordered_json row = ordered_json::array();
        for (int i = 0; i < b.dim(); ++i)
          row.push_back(b.vertex_data()[size_t(v) * b.dim() + i]);
        verts.push_back(std::move(row));
      }
      params["vertices"] = std::move(verts);
      break;
    }
    case BodyKind::kSlab:
      params["axis"] = b.axis();
      params["half_width"] = b.slab_half_width();
      params["radial_cap"] = b.radial_cap();
      break;
    case BodyKind::kHalfspacePair:
      params["axis"] = b.axis();
      params["offset"] = b.offset();
      break;
    case BodyKind::kMinkowskiCombo:
    case BodyKind::kGeometricMean:
      params["lambda"] = b.lambda();
      break;
    case BodyKind::kDilate:
      params["t"] = b.dilate_factor();
      break;
  }
  j["params"] = std::move(params);
  ordered_json kids = ordered_json::array();
  for (const auto& c : b.children()) kids.push_back(body_to_json(*c));
  j["children"] = std::move(kids);
  return j;
}

inline std::string body_to_string(const Body& b) { return body_to_json(b).dump(); }

inline BodyPtr body_from_json(const ordered_json& j) {
  if (!j.is_object()) throw std::invalid_argument("body JSON: expected an object");
  std::string kind = j.at("kind").get<std::string>();
  int dim = j.at("dim").get<int>();
  const ordered_json& params = j.at("params");
  std::vector<BodyPtr> kids;
  if (j.contains("children"))
    for (const auto& c : j.at("children")) kids.push_back(body_from_json(c));

  auto need_children = [&](size_t k) {
    if (kids.size() != k)
      throw std::invalid_argument("body JSON: " + kind + " expects " +
                                  std::to_string(k) + " children");
  };
  switch (kind_from_name(kind)) {
    case BodyKind::kBall:
      need_children(0);
      return ball(dim, params.at("radius").get<double>());
    case BodyKind::kBox:
      need_children(0);
      return box(params.at("half_widths").get<std::vector<double>>());
    case BodyKind::kEllipsoid:
      need_children(0);
      return ellipsoid(params.at("semi_axes").get<std::vector<double>>());
    case BodyKind::kSymPolytope:
      need_children(0);
      return sym_polytope(
          dim, params.at("vertices").get<std::vector<std::vector<double>>>());
    case BodyKind::kSlab:
      need_children(0);
      return slab(dim, params.at("axis").get<int>(),
                  params.at("half_width").get<double>(),
                  params.at("radial_cap").get<double>());
    case BodyKind::kHalfspacePair:
      need_children(0);
      return halfspace_pair(dim, params.at("axis").get<int>(),
                            params.at("offset").get<double>());
    case BodyKind::kMinkowskiCombo:
      need_children(2);
      return minkowski_combine(params.at("lambda").get<double>(), kids[0], kids[1]);
    case BodyKind::kGeometricMean:
      need_children(2);
      return geometric_mean(params.at("lambda").get<double>(), kids[0], kids[1]);
    case BodyKind::kDilate:
      need_children(1);
      return dilate(params.at("t").get<double>(), kids[0]);
  }
  throw std::invalid_argument("body JSON: unreachable kind");
}

inline BodyPtr body_from_string(const std::string& s) {
  ordered_json j;
  try {
    j = ordered_json::parse(s);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("body JSON: ") + e.what());
  }
  try {
    return body_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("body JSON: ") + e.what());
  }
}

}  // namespace gbm
