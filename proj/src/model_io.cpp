#include "vslcrf/model_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "vslcrf/packing.hpp"
#include "vslcrf/textio.hpp"

namespace vslcrf {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw std::runtime_error(path + ": " + msg);
}

std::string next_line(std::ifstream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) fail(path, "unexpected end of model file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

std::pair<std::string, std::string> split_kv(const std::string& line, const std::string& path) {
  const std::size_t sp = line.find(' ');
  if (sp == std::string::npos) fail(path, "malformed line: " + line);
  return {line.substr(0, sp), line.substr(sp + 1)};
}

}  // namespace

void save_model(const SavedModel& saved, const std::string& path) {
  validate(saved.model);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file: " + path);
  const Model& m = saved.model;
  out << "#vslcrf-model v1\n";
  out << "mode " << to_string(m.config.mode) << '\n';
  out << "classes " << m.config.num_classes << '\n';
  out << "states " << m.config.num_states << '\n';
  out << "features " << m.config.feature_dim << '\n';
  out << "edge_feature " << to_string(m.config.edge_feature_mode) << '\n';
  out << "lambda_n " << fmt17(m.hyper.lambda_n) << '\n';
  out << "lambda_o " << fmt17(m.hyper.lambda_o) << '\n';
  out << "lambda_p " << fmt17(m.hyper.lambda_p) << '\n';
  out << "max_iters " << m.hyper.max_iters << '\n';
  out << "grad_tol " << fmt17(m.hyper.grad_tol) << '\n';
  out << "em_max_rounds " << m.hyper.em_max_rounds << '\n';
  out << "em_obj_tol " << fmt17(m.hyper.em_obj_tol) << '\n';
  out << "seed " << m.hyper.seed << '\n';
  out << "sigma_floor " << fmt17(m.hyper.sigma_floor) << '\n';
  if (saved.pca) {
    out << "pca " << saved.pca->mean.size() << ' ' << saved.pca->basis.cols() << ' '
        << fmt17(saved.pca->retained_energy) << '\n';
    for (int d = 0; d < saved.pca->mean.size(); ++d) {
      if (d > 0) out << ' ';
      out << fmt17(saved.pca->mean(d));
    }
    out << '\n';
    for (int r = 0; r < saved.pca->basis.rows(); ++r) {
      for (int c = 0; c < saved.pca->basis.cols(); ++c) {
        if (c > 0) out << ' ';
        out << fmt17(saved.pca->basis(r, c));
      }
      out << '\n';
    }
  } else {
    out << "pca none\n";
  }
  const Eigen::VectorXd x = pack_full(m);
  out << "params " << x.size() << '\n';
  for (int i = 0; i < x.size(); ++i) out << fmt17(x(i)) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

SavedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  if (next_line(in, path) != "#vslcrf-model v1") fail(path, "bad magic line");

  SavedModel saved;
  ModelConfig config;
  Hyperparams hyper;
  std::optional<PcaTransform> pca;
  long n_params = -1;

  std::string line;
  while (n_params < 0) {
    line = next_line(in, path);
    auto [key, value] = split_kv(line, path);
    try {
      if (key == "mode") {
        config.mode = mode_from_string(value);
      } else if (key == "classes") {
        config.num_classes = static_cast<int>(parse_long(value));
      } else if (key == "states") {
        config.num_states = static_cast<int>(parse_long(value));
      } else if (key == "features") {
        config.feature_dim = static_cast<int>(parse_long(value));
      } else if (key == "edge_feature") {
        config.edge_feature_mode = edge_feature_mode_from_string(value);
      } else if (key == "lambda_n") {
        hyper.lambda_n = parse_double(value);
      } else if (key == "lambda_o") {
        hyper.lambda_o = parse_double(value);
      } else if (key == "lambda_p") {
        hyper.lambda_p = parse_double(value);
      } else if (key == "max_iters") {
        hyper.max_iters = static_cast<int>(parse_long(value));
      } else if (key == "grad_tol") {
        hyper.grad_tol = parse_double(value);
      } else if (key == "em_max_rounds") {
        hyper.em_max_rounds = static_cast<int>(parse_long(value));
      } else if (key == "em_obj_tol") {
        hyper.em_obj_tol = parse_double(value);
      } else if (key == "seed") {
        hyper.seed = static_cast<std::uint64_t>(parse_long(value));
      } else if (key == "sigma_floor") {
        hyper.sigma_floor = parse_double(value);
      } else if (key == "pca") {
        if (value != "none") {
          std::istringstream ss(value);
          long d0, d;
          double energy;
          if (!(ss >> d0 >> d >> energy)) fail(path, "malformed pca line");
          PcaTransform t;
          t.retained_energy = energy;
          t.mean.resize(d0);
          {
            std::istringstream ms(next_line(in, path));
            for (long i = 0; i < d0; ++i)
              if (!(ms >> t.mean(i))) fail(path, "malformed pca mean");
          }
          t.basis.resize(d0, d);
          for (long r = 0; r < d0; ++r) {
            std::istringstream bs(next_line(in, path));
            for (long c = 0; c < d; ++c)
              if (!(bs >> t.basis(r, c))) fail(path, "malformed pca basis row");
          }
          pca = std::move(t);
        }
      } else if (key == "params") {
        n_params = parse_long(value);
      } else {
        fail(path, "unknown key: " + key);
      }
    } catch (const std::invalid_argument& e) {
      fail(path, e.what());
    }
  }

  validate(config);
  Model base;
  base.config = config;
  base.hyper = hyper;
  base.classes.resize(config.num_classes);
  const int C = config.num_states;
  const int D = config.feature_dim;
  for (ClassParams& cp : base.classes) {
    cp.nominal.beta = Eigen::MatrixXd::Zero(C, D + 1);
    cp.ordinal.a = Eigen::VectorXd::Zero(D);
    cp.ordinal.gamma = Eigen::VectorXd::Zero(C - 2);
    cp.nominal_edge.u = Eigen::MatrixXd::Zero(C, C);
    cp.ordinal_edge.u = Eigen::MatrixXd::Zero(C, C);
  }
  const long expect = pack_full(base).size();
  if (n_params != expect)
    fail(path, "params count " + std::to_string(n_params) + " does not match config (" +
                   std::to_string(expect) + ")");
  Eigen::VectorXd x(n_params);
  for (long i = 0; i < n_params; ++i) {
    try {
      x(i) = parse_double(next_line(in, path));
    } catch (const std::invalid_argument& e) {
      fail(path, e.what());
    }
  }
  saved.model = unpack_full(base, x);
  saved.pca = std::move(pca);
  validate(saved.model);
  return saved;
}

}  // namespace vslcrf
