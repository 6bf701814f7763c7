#include "ptznav/diffnum/nets.hpp"

namespace ptznav::diffnum {

void add_trunk_params(TrainableModel& model, const std::string& prefix,
                      const TrunkSpec& spec, Rng& rng) {
  int in = spec.in_channels;
  for (std::size_t i = 0; i < spec.channels.size(); ++i) {
    const int out = spec.channels[i];
    const int fan_in = in * spec.kernel * spec.kernel;
    const int fan_out = out * spec.kernel * spec.kernel;
    const std::string name = prefix + "conv" + std::to_string(i);
    model.add(name + ".w", glorot_uniform({out, in, spec.kernel, spec.kernel},
                                          fan_in, fan_out, rng));
    model.add(name + ".b", Tensor({out}));
    in = out;
  }
}

Graph::NodeId trunk_forward(Graph& g, TrainableModel& model,
                            const std::string& prefix, const TrunkSpec& spec,
                            Graph::NodeId x) {
  Graph::NodeId cur = x;
  for (std::size_t i = 0; i < spec.channels.size(); ++i) {
    const std::string name = prefix + "conv" + std::to_string(i);
    const Graph::NodeId w = model.bind(g, name + ".w");
    const Graph::NodeId b = model.bind(g, name + ".b");
    cur = g.relu(g.conv2d(cur, w, b, spec.stride, spec.pad));
  }
  return cur;
}

void add_affine_params(TrainableModel& model, const std::string& prefix,
                       int in_dim, int out_dim, Rng& rng) {
  model.add(prefix + ".w", glorot_uniform({out_dim, in_dim}, in_dim, out_dim,
                                          rng));
  model.add(prefix + ".b", Tensor({out_dim}));
}

Graph::NodeId affine_forward(Graph& g, TrainableModel& model,
                             const std::string& prefix, Graph::NodeId x) {
  return g.affine(x, model.bind(g, prefix + ".w"), model.bind(g, prefix + ".b"));
}

void add_lstm_params(TrainableModel& model, const std::string& prefix,
                     int in_dim, int hidden, Rng& rng) {
  const int rows = 4 * hidden;
  const int cols = in_dim + hidden;
  model.add(prefix + ".w", glorot_uniform({rows, cols}, cols, rows, rng));
  Tensor bias({rows});
  for (int i = hidden; i < 2 * hidden; ++i) bias.data[i] = 1.0;  // forget gate
  model.add(prefix + ".b", std::move(bias));
}

std::pair<Graph::NodeId, Graph::NodeId> lstm_forward(
    Graph& g, TrainableModel& model, const std::string& prefix, Graph::NodeId x,
    Graph::NodeId h, Graph::NodeId c, int hidden) {
  const Graph::NodeId w = model.bind(g, prefix + ".w");
  const Graph::NodeId b = model.bind(g, prefix + ".b");
  return g.lstm_cell(x, h, c, w, b, hidden);
}

}  // namespace ptznav::diffnum
