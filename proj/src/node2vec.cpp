#include "mtgrr/node2vec.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mtgrr {

namespace {

double fast_sigmoid(double x) {
  if (x > 30) return 1.0;
  if (x < -30) return 0.0;
  return 1.0 / (1.0 + std::exp(-x));
}

}  // namespace

Matrix region_positional_embeddings(const Subgraph& boundary, const WalkEmbeddingConfig& cfg) {
  if (cfg.dims < 1) throw Error(ErrorCode::InvalidArgument, "embedding dims must be >= 1");
  const int n = boundary.n_nodes;
  const auto neighbors = boundary.neighbor_lists();
  std::mt19937_64 rng(cfg.seed ^ 0x6e6f64653276ULL);

  std::vector<std::vector<int>> walks;
  walks.reserve(static_cast<std::size_t>(n) * cfg.walks_per_node);
  for (int rep = 0; rep < cfg.walks_per_node; ++rep) {
    for (int start = 0; start < n; ++start) {
      std::vector<int> walk{start};
      while (static_cast<int>(walk.size()) < cfg.walk_length) {
        const auto& nb = neighbors[walk.back()];
        if (nb.empty()) {
          walk.push_back(walk.back());
        } else {
          std::uniform_int_distribution<std::size_t> pick(0, nb.size() - 1);
          walk.push_back(nb[pick(rng)]);
        }
      }
      walks.push_back(std::move(walk));
    }
  }

  // Unigram^0.75 noise distribution over visited nodes.
  std::vector<double> freq(n, 0.0);
  for (const auto& w : walks) {
    for (int v : w) freq[v] += 1.0;
  }
  for (auto& f : freq) f = std::pow(f, 0.75);
  std::discrete_distribution<int> noise(freq.begin(), freq.end());

  Matrix input(n, cfg.dims);
  Matrix output = Matrix::Zero(n, cfg.dims);
  std::uniform_real_distribution<double> init(-0.5 / cfg.dims, 0.5 / cfg.dims);
  for (Eigen::Index i = 0; i < input.size(); ++i) input.data()[i] = init(rng);

  long long total_steps = 0;
  for (const auto& w : walks) total_steps += static_cast<long long>(w.size());
  total_steps *= cfg.epochs;
  long long step = 0;

  RowVector grad_in(cfg.dims);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& walk : walks) {
      const int len = static_cast<int>(walk.size());
      for (int pos = 0; pos < len; ++pos, ++step) {
        const double lr = std::max(cfg.learning_rate * (1.0 - static_cast<double>(step) / total_steps),
                                   cfg.learning_rate * 1e-4);
        const int center = walk[pos];
        const int lo = std::max(0, pos - cfg.window);
        const int hi = std::min(len - 1, pos + cfg.window);
        for (int c = lo; c <= hi; ++c) {
          if (c == pos) continue;
          const int context = walk[c];
          grad_in.setZero();
          for (int s = 0; s <= cfg.negatives; ++s) {
            int target = context;
            double label = 1.0;
            if (s > 0) {
              target = noise(rng);
              if (target == context) continue;
              label = 0.0;
            }
            const double score = fast_sigmoid(input.row(center).dot(output.row(target)));
            const double g = lr * (label - score);
            grad_in += g * output.row(target);
            output.row(target) += g * input.row(center);
          }
          input.row(center) += grad_in;
        }
      }
    }
  }
  return input;
}

}  // namespace mtgrr
