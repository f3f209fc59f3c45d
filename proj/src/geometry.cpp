#include "esgraph/geometry.hpp"

namespace esgraph {

bool is_rotation(const Mat3& m, double tol) {
  const Mat3 mt = transpose3(m);
  const Mat3 p = matmul3(mt, m);
  const Mat3 id = identity3();
  for (int i = 0; i < 9; ++i)
    if (std::abs(p[i] - id[i]) > tol) return false;
  return std::abs(det3(m) - 1.0) <= tol;
}

Mat3 random_rotation(RandomSource& rng) {
  // Gram-Schmidt on a Gaussian sample; generically non-degenerate.
  Vec3 a = {rng.normal(), rng.normal(), rng.normal()};
  Vec3 b = {rng.normal(), rng.normal(), rng.normal()};
  a = scaled(a, 1.0 / norm(a));
  b = sub(b, scaled(a, dot(a, b)));
  b = scaled(b, 1.0 / norm(b));
  const Vec3 c = {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
                  a[0] * b[1] - a[1] * b[0]};
  // Columns a, b, a x b give det +1.
  return {a[0], b[0], c[0], a[1], b[1], c[1], a[2], b[2], c[2]};
}

}  // namespace esgraph
