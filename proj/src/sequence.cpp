#include "deeppcr/sequence.hpp"

namespace deeppcr {

std::vector<Vector> sequential_rollout(const MarkovSequence& seq) {
  const int L = seq.length();
  std::vector<Vector> z(L + 1);
  z[0] = seq.initial_value();
  for (int l = 1; l <= L; ++l) {
    z[l].resize(seq.state_dim(l));
    seq.eval_step(l, z[l - 1], z[l]);
  }
  return z;
}

}  // namespace deeppcr
