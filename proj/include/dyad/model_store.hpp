#pragma once

#include "dyad/classify.hpp"

#include <iosfwd>
#include <string>

namespace dyad {

// Training context recorded alongside a stored model.
struct ModelMetadata {
  std::string score_key;
  int w = 0;
  int n_lambda = 0;
  InputType input_type = InputType::TC;
  int fold = -1;  // -1: trained on every session
};

struct StoredModel {
  TrainedModel model;
  ModelMetadata meta;
};

// File layout: a text header of `key=value` lines opened by
// "DYADMODES-MODEL 1" and closed by "end", followed by `params` little-endian
// IEEE-754 float64 values.
void write_model(std::ostream& out, const TrainedModel& model, const ModelMetadata& meta);
StoredModel read_model(std::istream& in);

void save_model(const std::string& path, const TrainedModel& model, const ModelMetadata& meta);
StoredModel load_model(const std::string& path);

}  // namespace dyad
