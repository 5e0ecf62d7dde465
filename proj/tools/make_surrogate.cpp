// Writes a random stable, controllable and observable problem of the size of
// the large demo (n=10, m=3, p=4, o=3) as a problem JSON.
#include <Eigen/Dense>

#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "tubempc/json_io.hpp"
#include "tubempc/synthesis.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using tubempc::io::Json;
using tubempc::io::to_json;

namespace {

MatrixXd gaussian(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> g;
  return MatrixXd::NullaryExpr(rows, cols, [&] { return g(rng); });
}

Json box(int dim, double half_width) {
  return to_json(tubempc::geometry::HPolytope::symmetric_box(VectorXd::Constant(dim, half_width)));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate the n=10 surrogate problem"};
  std::uint64_t seed = 2024;
  int n = 10, m = 3, p = 4, o = 3;
  double radius = 0.9, disturbance = 0.001;
  std::string out;
  app.add_option("--seed", seed, "Generator seed");
  app.add_option("--n", n)->check(CLI::PositiveNumber);
  app.add_option("--m", m)->check(CLI::PositiveNumber);
  app.add_option("--p", p)->check(CLI::PositiveNumber);
  app.add_option("--o", o)->check(CLI::PositiveNumber);
  app.add_option("--radius", radius, "Spectral radius of A")->check(CLI::Range(0.05, 0.999));
  app.add_option("--disturbance", disturbance, "Bound on |w| and |v| per entry");
  app.add_option("--out", out, "Output path (stdout when absent)");
  CLI11_PARSE(app, argc, argv);

  std::mt19937_64 rng(seed);
  namespace syn = tubempc::synthesis;
  MatrixXd A, B, C, H;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 1000) {
      std::cerr << "no controllable and observable draw found\n";
      return 1;
    }
    A = gaussian(rng, n, n);
    A *= radius / syn::spectral_radius(A);
    B = gaussian(rng, n, m);
    C = gaussian(rng, p, n);
    H = gaussian(rng, o, n);
    if (syn::pbh_controllable(A, B) && syn::pbh_observable(A, C)) break;
  }
  // Round to a fixed number of digits so the file is readable and the
  // problem does not depend on printing every bit.
  auto round = [](MatrixXd M) {
    return M.unaryExpr([](double v) { return std::round(v * 1e6) / 1e6; }).eval();
  };
  A = round(A);
  B = round(B);
  C = round(C);
  H = round(H);

  Json problem{{"name", "surrogate_n" + std::to_string(n)},
               {"dt", 0.05},
               {"plant",
                {{"A", to_json(A)},
                 {"B", to_json(B)},
                 {"C", to_json(C)},
                 {"H", to_json(H)},
                 {"Z", box(o, 1.0)},
                 {"U", box(m, 1.0)},
                 {"W", box(n, disturbance)},
                 {"V", box(p, disturbance)}}},
               {"weights", {{"Qz", to_json(MatrixXd(MatrixXd::Identity(o, o)))}, {"gamma", 1e-2}, {"R", to_json(MatrixXd(MatrixXd::Identity(m, m)))}}},
               {"horizon", 13},
               {"rpi", {{"k_max", 1000}, {"eps", {0.01, 0.1, 0.5}}, {"delta_mode", "exact"}}},
               {"simulation",
                {{"steps", 50},
                 {"seed", 1},
                 {"runs", 20},
                 {"x0_box", {{"lower", to_json(VectorXd(VectorXd::Constant(n, -0.05)))}, {"upper", to_json(VectorXd(VectorXd::Constant(n, 0.05)))}}},
                 {"disturbance", "uniform"}}}};
  if (out.empty()) {
    std::cout << problem.dump(2) << '\n';
  } else {
    tubempc::io::write_json_file(out, problem);
  }
  return 0;
}
