#include "tempnet/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <sstream>

namespace tempnet {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradientFloor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double loss_of(const TempNet<double>& net, const Tensor<double>& input, double label) {
  Tape<double> tape;
  auto out = net.forward(tape, input);
  return bce_loss(out.probability, Tensor<double>(Shape{1}, {label})).value().item();
}

}  // namespace

GradcheckReport gradcheck_network(const TempNet<double>& net, const Tensor<double>& input, double tolerance,
                                  const GradcheckOptions& options) {
  ParamStore<double> analytic;
  {
    Tape<double> tape;
    tape.set_gradient_fault(options.fault);
    auto out = net.forward(tape, input);
    analytic = tape.backward(bce_loss(out.probability, Tensor<double>(Shape{1}, {options.label})));
  }

  GradcheckReport report;
  report.tolerance = tolerance;
  TempNet<double> probe = net;
  const double centre = loss_of(probe, input, options.label);
  const double h = options.epsilon;
  for (std::size_t p = 0; p < probe.params().size(); ++p) {
    Tensor<double>& w = probe.params().at(p);
    const Tensor<double>& g = analytic.get(probe.params().name(p));
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      auto differences = [&](double step) {
        w[i] = saved + step;
        const double up = loss_of(probe, input, options.label);
        w[i] = saved - step;
        const double down = loss_of(probe, input, options.label);
        w[i] = saved;
        return std::array<double, 3>{(up - down) / (2 * step), (up - centre) / step, (centre - down) / step};
      };
      auto d = differences(h);
      double numeric = d[0];
      double err = relative_error(g[i], numeric);
      if (relative_error(d[1], d[2]) > kKinkThreshold) {
        // A ReLU or max switch lies inside [-h, h]. Shrink the step until it
        // falls outside; if it never does, the analytic value must match the
        // one-sided slope of the side that holds no switch.
        ++report.kinks;
        double step = h;
        bool resolved = false;
        for (int k = 0; k < 2 && !resolved; ++k) {
          step /= 10;
          d = differences(step);
          resolved = relative_error(d[1], d[2]) <= kKinkThreshold;
        }
        if (resolved) {
          numeric = d[0];
          err = relative_error(g[i], numeric);
        } else {
          const double er = relative_error(g[i], d[1]);
          const double el = relative_error(g[i], d[2]);
          numeric = er < el ? d[1] : d[2];
          err = std::min(er, el);
        }
      }
      ++report.checked;
      if (err > report.max_rel_error || report.checked == 1) {
        report.max_rel_error = err;
        report.worst_param = probe.params().name(p);
        report.worst_index = i;
        report.worst_analytic = g[i];
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

GradcheckReport gradcheck(const TempNetConfig& cfg, double tolerance, const GradcheckOptions& options) {
  TempNet<double> net = TempNet<double>::build(cfg, options.seed);
  // Random biases too, so every bias gradient path is exercised away from zero.
  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> small(0.0, 0.1);
  for (std::size_t p = 0; p < net.params().size(); ++p) {
    const std::string& name = net.params().name(p);
    if (name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0) {
      for (auto& v : net.params().at(p).data()) v = small(rng);
    }
  }
  Tensor<double> input(cfg.input());
  std::normal_distribution<double> unit(0.0, 1.0);
  for (auto& v : input.data()) v = unit(rng);
  return gradcheck_network(net, input, tolerance, options);
}

TempNetConfig reduced_gradcheck_config(bool attention, bool wavelet) {
  TempNetConfig cfg;
  cfg.input_shape = {4, 8, 8, wavelet ? std::size_t{4} : std::size_t{1}};
  cfg.channels = 2;
  cfg.spatial_blocks = 2;
  cfg.temporal_blocks = 1;
  cfg.attention_enabled = attention;
  cfg.attention_reduction = 2;
  return cfg;
}

std::string format_gradcheck(const GradcheckReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << (r.passed ? "PASS" : "FAIL") << " gradcheck: " << r.checked << " parameters, max relative error "
     << std::scientific << r.max_rel_error << " (tolerance " << r.tolerance << "), " << r.kinks << " kinks\n";
  os << "worst: " << r.worst_param << "[" << r.worst_index << "] analytic " << r.worst_analytic << " numeric "
     << r.worst_numeric << '\n';
  return os.str();
}

}  // namespace tempnet
