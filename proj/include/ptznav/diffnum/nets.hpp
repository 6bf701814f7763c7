#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ptznav/diffnum/model.hpp"

namespace ptznav::diffnum {

// Stack of 3x3 stride-2 zero-padded convolutions with ReLU after each.
struct TrunkSpec {
  int in_channels = 2;
  std::vector<int> channels{16, 32, 64};
  int kernel = 3;
  int stride = 2;
  int pad = 1;
};

void add_trunk_params(TrainableModel& model, const std::string& prefix,
                      const TrunkSpec& spec, Rng& rng);
Graph::NodeId trunk_forward(Graph& g, TrainableModel& model,
                            const std::string& prefix, const TrunkSpec& spec,
                            Graph::NodeId x);

void add_affine_params(TrainableModel& model, const std::string& prefix,
                       int in_dim, int out_dim, Rng& rng);
Graph::NodeId affine_forward(Graph& g, TrainableModel& model,
                             const std::string& prefix, Graph::NodeId x);

// Single LSTM cell parameters; forget-gate bias initialized to 1.
void add_lstm_params(TrainableModel& model, const std::string& prefix,
                     int in_dim, int hidden, Rng& rng);
std::pair<Graph::NodeId, Graph::NodeId> lstm_forward(Graph& g,
                                                     TrainableModel& model,
                                                     const std::string& prefix,
                                                     Graph::NodeId x,
                                                     Graph::NodeId h,
                                                     Graph::NodeId c,
                                                     int hidden);

}  // namespace ptznav::diffnum
