#include "hct/grad_check.hpp"

#include "hct/errors.hpp"

#include <algorithm>
#include <cmath>

namespace hct {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckResult grad_check(const std::function<Var(Graph&)>& f, std::span<Tensor* const> targets, double eps) {
  if (!(eps > 0.0)) throw UsageError("grad_check eps must be positive");
  GradCheckResult result;

  for (Tensor* t : targets) t->zero_grad();
  {
    Graph g;
    g.set_kink_radius(eps);
    Var loss = f(g);
    g.backward(loss);
    result.kink = g.kink_count() > 0;
  }

  auto evaluate = [&] {
    Graph g;
    return f(g).scalar();
  };

  for (Tensor* t : targets) {
    std::vector<double> analytic(t->grad().begin(), t->grad().end());
    auto data = t->data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = evaluate();
      data[i] = saved - eps;
      const double down = evaluate();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[i], numeric));
      ++result.coordinates;
    }
  }
  return result;
}

GradCheckResult grad_check(const std::function<Var(Graph&, Var)>& f, const Tensor& x, double eps) {
  Tensor probe = x;
  Tensor* targets[] = {&probe};
  return grad_check([&](Graph& g) { return f(g, g.param(probe)); }, targets, eps);
}

}  // namespace hct
