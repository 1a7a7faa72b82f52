/*
 * Copyright 2026 The MVOL Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "mvol/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>
#include <sstream>

#include "mvol/errors.hpp"
#include "mvol/io.hpp"
#include "mvol/parallel.hpp"

namespace mvol {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Alpha: return "alpha";
    case SweepAxis::Epsilon: return "epsilon";
    case SweepAxis::Mu: return "mu";
  }
  return "?";
}

SweepAxis parse_axis(const std::string& name) {
  if (name == "alpha") return SweepAxis::Alpha;
  if (name == "epsilon") return SweepAxis::Epsilon;
  if (name == "mu") return SweepAxis::Mu;
  throw ConfigError("unknown sweep axis '" + name + "' (alpha, epsilon, mu)");
}

namespace {

TrainPlan plan_from_json(const json& j, int k) {
  StrictObject obj(j, "plan");
  TrainPlan p;
  p.epsilon = TrainPlan::default_epsilon(k);
  if (obj.has("objective")) {
    p.objective = parse_objective(obj.at("objective").get<std::string>());
  }
  obj.get("beta", p.beta);
  obj.get("epsilon", p.epsilon);
  obj.get("eta", p.eta);
  obj.get("eta_prime", p.eta_prime);
  obj.get("epochs", p.epochs);
  obj.get("decay_epochs", p.decay_epochs);
  obj.get("decay_factor", p.decay_factor);
  obj.get("batch_size_id", p.batch_size_id);
  obj.get("batch_size_ood", p.batch_size_ood);
  obj.get("momentum", p.momentum);
  if (obj.has("regime")) {
    StrictObject r(obj.at("regime"), "plan.regime");
    if (r.has("kind")) p.regime.kind = parse_regime(r.at("kind").get<std::string>());
    r.get("teachers", p.regime.teachers);
    r.get("temperature", p.regime.temperature);
    r.get("ce_weight", p.regime.ce_weight);
    r.get("t2_scaling", p.regime.t2_scaling);
    r.finish();
  }
  if (obj.has("net")) {
    StrictObject n(obj.at("net"), "plan.net");
    n.get("m", p.net.m);
    n.get("q", p.net.q);
    n.get("lambda", p.net.lambda);
    n.get("sigma0", p.net.sigma0);
    n.finish();
  }
  obj.finish();
  return p;
}

json plan_to_json(const TrainPlan& p) {
  return {{"objective", to_string(p.objective)},
          {"beta", p.beta},
          {"epsilon", p.epsilon},
          {"eta", p.eta},
          {"eta_prime", p.eta_prime},
          {"epochs", p.epochs},
          {"decay_epochs", p.decay_epochs},
          {"decay_factor", p.decay_factor},
          {"batch_size_id", p.batch_size_id},
          {"batch_size_ood", p.batch_size_ood},
          {"momentum", p.momentum},
          {"regime",
           {{"kind", to_string(p.regime.kind)},
            {"teachers", p.regime.teachers},
            {"temperature", p.regime.temperature},
            {"ce_weight", p.regime.ce_weight},
            {"t2_scaling", p.regime.t2_scaling}}},
          {"net",
           {{"m", p.net.m},
            {"q", p.net.q},
            {"lambda", p.net.lambda},
            {"sigma0", p.net.sigma0}}}};
}

std::vector<ScoreKind> parse_scores(const json& j) {
  if (!j.is_array()) throw ConfigError("eval.scores: expected a list");
  std::vector<ScoreKind> out;
  for (const auto& s : j) {
    if (!s.is_string()) throw ConfigError("eval.scores: expected names");
    const auto kind = parse_score(s.get<std::string>());
    if (std::find(out.begin(), out.end(), kind) != out.end()) {
      throw ConfigError("eval.scores: duplicate " + s.get<std::string>());
    }
    out.push_back(kind);
  }
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  StrictObject top(j, "config");
  ExperimentConfig c;
  top.get("seed", c.seed);
  top.get("output_dir", c.output_dir);
  if (top.has("gen")) c.gen = gen_config_from_json(top.at("gen"));
  if (top.has("data")) {
    StrictObject d(top.at("data"), "data");
    d.get("n_train", c.data.n_train);
    d.get("n_aux", c.data.n_aux);
    d.get("n_test_id", c.data.n_test_id);
    d.get("n_test_ood", c.data.n_test_ood);
    d.get("alpha", c.data.alpha);
    d.finish();
  }
  c.plan = top.has("plan") ? plan_from_json(top.at("plan"), c.gen.k)
                           : plan_from_json(json::object(), c.gen.k);
  if (top.has("eval")) {
    StrictObject e(top.at("eval"), "eval");
    e.get("tpr_target", c.eval.tpr_target);
    e.get("ood_margin", c.eval.ood_margin);
    if (e.has("scores")) c.eval.scores = parse_scores(e.at("scores"));
    e.get("assumption_tol", c.eval.assumption_tol);
    e.get("coverage_threshold", c.eval.coverage_threshold);
    e.finish();
  }
  if (top.has("sweep") && !top.at("sweep").is_null()) {
    StrictObject s(top.at("sweep"), "sweep");
    SweepConfig sw;
    if (s.has("axis")) sw.axis = parse_axis(s.at("axis").get<std::string>());
    s.get("values", sw.values);
    s.get("seeds", sw.seeds);
    if (s.has("objectives")) {
      sw.objectives.clear();
      for (const auto& o : s.at("objectives")) {
        sw.objectives.push_back(parse_objective(o.get<std::string>()));
      }
    }
    s.finish();
    c.sweep = sw;
  }
  top.finish();
  c.validate();
  return c;
}

json ExperimentConfig::to_json() const {
  json scores = json::array();
  for (auto s : eval.scores) scores.push_back(mvol::to_string(s));
  json j = {{"seed", seed},
            {"output_dir", output_dir},
            {"gen", mvol::to_json(gen)},
            {"data",
             {{"n_train", data.n_train},
              {"n_aux", data.n_aux},
              {"n_test_id", data.n_test_id},
              {"n_test_ood", data.n_test_ood},
              {"alpha", data.alpha}}},
            {"plan", plan_to_json(plan)},
            {"eval",
             {{"tpr_target", eval.tpr_target},
              {"ood_margin", eval.ood_margin},
              {"scores", scores},
              {"assumption_tol", eval.assumption_tol},
              {"coverage_threshold", eval.coverage_threshold}}}};
  if (sweep) {
    json objectives = json::array();
    for (auto o : sweep->objectives) objectives.push_back(mvol::to_string(o));
    j["sweep"] = {{"axis", mvol::to_string(sweep->axis)},
                  {"values", sweep->values},
                  {"seeds", sweep->seeds},
                  {"objectives", objectives}};
  }
  return j;
}

void ExperimentConfig::validate() const {
  gen.validate();
  plan.validate();
  if (data.n_train < 1 || data.n_test_id < 1 || data.n_test_ood < 1) {
    throw ConfigError("data: n_train, n_test_id and n_test_ood must be >= 1");
  }
  if (plan.objective != Objective::CEOnly && data.n_aux < 1) {
    throw ConfigError("data.n_aux must be >= 1 for objective " +
                      mvol::to_string(plan.objective));
  }
  if (!(data.alpha >= 0.0 && data.alpha <= 1.0)) {
    throw ConfigError("data.alpha must lie in [0, 1]");
  }
  if (!(eval.tpr_target > 0.0 && eval.tpr_target <= 1.0)) {
    throw ConfigError("eval.tpr_target must lie in (0, 1]");
  }
  if (eval.scores.empty()) throw ConfigError("eval.scores must not be empty");
  if (!(eval.assumption_tol > 0.0)) {
    throw ConfigError("eval.assumption_tol must be > 0");
  }
  if (!std::isfinite(eval.ood_margin)) {
    throw ConfigError("eval.ood_margin must be finite");
  }
  if (sweep) {
    if (sweep->values.empty()) throw ConfigError("sweep.values is empty");
    if (sweep->seeds < 1) throw ConfigError("sweep.seeds must be >= 1");
    if (sweep->objectives.empty()) {
      throw ConfigError("sweep.objectives is empty");
    }
    for (double v : sweep->values) {
      ExperimentConfig probe = *this;
      probe.sweep.reset();
      probe.apply_axis(sweep->axis, v);
      for (auto o : sweep->objectives) {
        probe.plan.objective = o;
        probe.validate();
      }
    }
  }
}

void ExperimentConfig::apply_axis(SweepAxis axis, double value) {
  switch (axis) {
    case SweepAxis::Alpha:
      if (!(value >= 0.0 && value <= 1.0)) {
        throw ConfigError("sweep alpha outside [0, 1]");
      }
      data.alpha = value;
      break;
    case SweepAxis::Epsilon:
      if (!(value > 0.0 && value < 1.0)) {
        throw ConfigError("sweep epsilon outside (0, 1)");
      }
      plan.epsilon = value;
      break;
    case SweepAxis::Mu:
      if (!(value >= 0.0 && value <= 1.0)) {
        throw ConfigError("sweep mu outside [0, 1]");
      }
      gen.mu = value;
      break;
  }
}

std::string ExperimentConfig::hash() const {
  json j = to_json();
  j.erase("output_dir");
  return hex64(fnv1a64(std::string_view(j.dump())));
}

ExperimentConfig load_config(const fs::path& path) {
  return ExperimentConfig::from_json(
      parse_json(read_file(path), path.string()));
}

ExperimentData generate_data(const ExperimentConfig& cfg, int workers) {
  cfg.gen.validate();
  ExperimentData out;
  Rng dict_rng = Rng::derive(cfg.seed, "gen/dict");
  out.dict = make_feature_dictionary(cfg.gen.k, cfg.gen.d, dict_rng);
  out.train_id =
      make_id_dataset(out.dict, cfg.gen, cfg.data.n_train,
                      Rng::derive_seed(cfg.seed, "gen/train_id"), workers);
  out.aux = make_wild_dataset(out.dict, cfg.gen, cfg.data.n_aux,
                              cfg.data.alpha,
                              Rng::derive_seed(cfg.seed, "gen/aux"), workers);
  out.test_id =
      make_id_dataset(out.dict, cfg.gen, cfg.data.n_test_id,
                      Rng::derive_seed(cfg.seed, "gen/test_id"), workers);
  out.test_ood =
      make_ood_dataset(out.dict, cfg.gen, cfg.data.n_test_ood,
                       Rng::derive_seed(cfg.seed, "gen/test_ood"), workers);
  return out;
}

const EvalReport& ModelEvaluation::report(ScoreKind kind) const {
  for (const auto& r : reports) {
    if (r.score_name == to_string(kind)) return r;
  }
  throw ConfigError("score " + to_string(kind) + " was not evaluated");
}

json ModelEvaluation::diagnostics_json() const {
  return {{"coverage", coverage.to_json()},
          {"assumption_all_features", assumption_all.to_json()},
          {"assumption_learned_only", assumption_learned.to_json()}};
}

ModelEvaluation evaluate_model(const Network& net, const ExperimentData& data,
                               const EvalConfig& eval, int workers) {
  if (net.k() != data.test_id.gen_config.k ||
      net.d() != data.test_id.gen_config.d) {
    throw ShapeMismatch("checkpoint shape does not match the datasets");
  }
  ModelEvaluation ev;
  ev.id_logits = dataset_logits(net, data.test_id, workers);
  ev.ood_logits = dataset_logits(net, data.test_ood, workers);
  const double acc = id_accuracy(ev.id_logits, data.test_id);
  for (auto kind : eval.scores) {
    const auto scored = score_logits(ev.id_logits, ev.ood_logits, kind);
    ev.reports.push_back(
        evaluate(scored, eval.tpr_target, eval.ood_margin, acc));
  }
  ev.coverage = feature_coverage(net, data.dict, eval.coverage_threshold);
  ev.assumption_all = check_assumption(ev.coverage, AssumptionMode::AllFeatures,
                                       eval.assumption_tol);
  ev.assumption_learned = check_assumption(
      ev.coverage, AssumptionMode::LearnedOnly, eval.assumption_tol);
  return ev;
}

RegimeResult train_experiment(const ExperimentConfig& cfg,
                              const ExperimentData& data, int workers) {
  TrainPlan plan = cfg.plan;
  plan.seed = Rng::derive_seed(cfg.seed, "train");
  return run_regime(data.train_id, data.aux, plan, workers);
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, int workers) {
  if (!cfg.sweep) throw ConfigError("sweep: config has no sweep section");
  const SweepConfig& sw = *cfg.sweep;
  const std::size_t n_values = sw.values.size();
  const std::size_t n_seeds = static_cast<std::size_t>(sw.seeds);
  const std::size_t n_obj = sw.objectives.size();
  const std::size_t n_trials = n_values * n_seeds * n_obj;
  std::vector<std::vector<SweepRow>> per_trial(n_trials);
  parallel_for(n_trials, workers, [&](std::size_t t) {
    const std::size_t vi = t / (n_seeds * n_obj);
    const std::size_t si = (t / n_obj) % n_seeds;
    const std::size_t oi = t % n_obj;
    ExperimentConfig tc = cfg;
    tc.sweep.reset();
    tc.apply_axis(sw.axis, sw.values[vi]);
    tc.plan.objective = sw.objectives[oi];
    tc.seed = Rng::derive_seed(cfg.seed, "sweep/seed", si);
    const auto data = generate_data(tc, 1);
    const auto models = train_experiment(tc, data, 1);
    const auto ev = evaluate_model(models.final_model.net, data, tc.eval, 1);
    for (const auto& report : ev.reports) {
      per_trial[t].push_back({sw.axis, sw.values[vi], static_cast<int>(si),
                              tc.seed, sw.objectives[oi], report});
    }
  });
  std::vector<SweepRow> rows;
  for (auto& trial : per_trial) {
    for (auto& row : trial) rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
}

}  // namespace

std::vector<SweepSummaryRow> summarize_sweep(const std::vector<SweepRow>& rows) {
  struct Group {
    SweepSummaryRow key;
    std::vector<double> fpr, auroc, fnr, acc;
  };
  std::vector<Group> groups;
  for (const auto& r : rows) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
      return g.key.axis == r.axis && g.key.value == r.value &&
             g.key.objective == r.objective &&
             g.key.score == r.report.score_name;
    });
    if (it == groups.end()) {
      Group g;
      g.key.axis = r.axis;
      g.key.value = r.value;
      g.key.objective = r.objective;
      g.key.score = r.report.score_name;
      groups.push_back(std::move(g));
      it = groups.end() - 1;
    }
    it->fpr.push_back(r.report.fpr_at_tpr);
    it->auroc.push_back(r.report.auroc);
    it->fnr.push_back(r.report.fnr);
    it->acc.push_back(r.report.id_accuracy);
  }
  std::vector<SweepSummaryRow> out;
  for (auto& g : groups) {
    SweepSummaryRow s = g.key;
    s.n = g.fpr.size();
    mean_std(g.fpr, s.fpr_mean, s.fpr_std);
    mean_std(g.auroc, s.auroc_mean, s.auroc_std);
    mean_std(g.fnr, s.fnr_mean, s.fnr_std);
    mean_std(g.acc, s.acc_mean, s.acc_std);
    out.push_back(s);
  }
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = std::string("# schema: ") + kSweepSchema + "\n";
  out += "axis,value,seed_index,seed,objective," + EvalReport::csv_header() +
         "\n";
  for (const auto& r : rows) {
    out += to_string(r.axis) + "," + format_double(r.value) + "," +
           std::to_string(r.seed_index) + "," + std::to_string(r.seed) + "," +
           to_string(r.objective) + "," + r.report.csv_row() + "\n";
  }
  return out;
}

std::string sweep_summary_csv(const std::vector<SweepSummaryRow>& rows) {
  std::string out = std::string("# schema: ") + kSweepSummarySchema + "\n";
  out +=
      "axis,value,objective,score,n,fpr_mean,fpr_std,auroc_mean,auroc_std,"
      "fnr_mean,fnr_std,acc_mean,acc_std\n";
  for (const auto& r : rows) {
    out += to_string(r.axis) + "," + format_double(r.value) + "," +
           to_string(r.objective) + "," + r.score + "," +
           std::to_string(r.n) + "," + format_double(r.fpr_mean) + "," +
           format_double(r.fpr_std) + "," + format_double(r.auroc_mean) + "," +
           format_double(r.auroc_std) + "," + format_double(r.fnr_mean) + "," +
           format_double(r.fnr_std) + "," + format_double(r.acc_mean) + "," +
           format_double(r.acc_std) + "\n";
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.emplace_back(line.substr(start));
      break;
    }
    cells.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  for (auto& c : cells) {
    while (!c.empty() && (c.back() == '\r' || c.back() == ' ')) c.pop_back();
  }
  return cells;
}

// Non-comment, non-blank lines.
std::vector<std::string_view> data_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty() || line == "\r" || line.front() == '#') continue;
    lines.push_back(line);
  }
  return lines;
}

double parse_real(const std::string& cell) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    throw IoError("malformed number '" + cell + "'");
  }
  return v;
}

template <class Int>
Int parse_int(const std::string& cell) {
  Int v = 0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
    throw IoError("malformed integer '" + cell + "'");
  }
  return v;
}

}  // namespace

std::vector<SweepRow> parse_sweep_csv(std::string_view text) {
  const auto lines = data_lines(text);
  if (lines.empty()) throw IoError("sweep CSV has no header");
  const auto header = split_csv_line(lines[0]);
  const auto expected = split_csv_line(
      "axis,value,seed_index,seed,objective," + EvalReport::csv_header());
  if (header != expected) throw IoError("sweep CSV header mismatch");
  std::vector<SweepRow> rows;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto c = split_csv_line(lines[l]);
    if (c.size() != expected.size()) throw IoError("sweep CSV row width");
    SweepRow r;
    r.axis = parse_axis(c[0]);
    r.value = parse_real(c[1]);
    r.seed_index = parse_int<int>(c[2]);
    r.seed = parse_int<std::uint64_t>(c[3]);
    r.objective = parse_objective(c[4]);
    r.report.score_name = c[5];
    r.report.tpr_target = parse_real(c[6]);
    r.report.fpr_at_tpr = parse_real(c[7]);
    r.report.auroc = parse_real(c[8]);
    r.report.tau = parse_real(c[9]);
    r.report.ood_margin = parse_real(c[10]);
    r.report.fnr = parse_real(c[11]);
    r.report.id_accuracy = parse_real(c[12]);
    r.report.n_id = parse_int<std::size_t>(c[13]);
    r.report.n_ood = parse_int<std::size_t>(c[14]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string logits_csv(const Eigen::MatrixXd& id_logits,
                       const Eigen::MatrixXd& ood_logits) {
  const Eigen::Index k = id_logits.rows();
  std::string out = std::string("# schema: ") + kLogitSchema + "\n";
  out += "split";
  for (Eigen::Index i = 0; i < k; ++i) out += ",logit_" + std::to_string(i);
  out += "\n";
  auto rows = [&](const Eigen::MatrixXd& m, const char* split) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out += split;
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out += "," + format_double(m(i, c));
      }
      out += "\n";
    }
  };
  rows(id_logits, "id");
  rows(ood_logits, "ood");
  return out;
}

void parse_logits_csv(std::string_view text, Eigen::MatrixXd& id_logits,
                      Eigen::MatrixXd& ood_logits) {
  const auto lines = data_lines(text);
  if (lines.empty()) throw IoError("logit CSV has no header");
  const auto header = split_csv_line(lines[0]);
  if (header.size() < 2 || header[0] != "split") {
    throw IoError("logit CSV header must be split,logit_0,...");
  }
  const std::size_t k = header.size() - 1;
  for (std::size_t i = 0; i < k; ++i) {
    if (header[i + 1] != "logit_" + std::to_string(i)) {
      throw IoError("logit CSV column " + std::to_string(i + 1) +
                    " must be logit_" + std::to_string(i));
    }
  }
  std::vector<std::vector<double>> id, ood;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto c = split_csv_line(lines[l]);
    if (c.size() != k + 1) {
      throw IoError("logit CSV row " + std::to_string(l) + " has wrong width");
    }
    std::vector<double> z(k);
    for (std::size_t i = 0; i < k; ++i) z[i] = parse_real(c[i + 1]);
    if (c[0] == "id") {
      id.push_back(std::move(z));
    } else if (c[0] == "ood") {
      ood.push_back(std::move(z));
    } else {
      throw IoError("logit CSV split must be id or ood, got '" + c[0] + "'");
    }
  }
  auto to_matrix = [k](const std::vector<std::vector<double>>& rows) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(k),
                      static_cast<Eigen::Index>(rows.size()));
    for (std::size_t c = 0; c < rows.size(); ++c) {
      for (std::size_t i = 0; i < k; ++i) {
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
            rows[c][i];
      }
    }
    return m;
  };
  id_logits = to_matrix(id);
  ood_logits = to_matrix(ood);
}

std::vector<EvalReport> evaluate_logits(const Eigen::MatrixXd& id_logits,
                                        const Eigen::MatrixXd& ood_logits,
                                        const EvalConfig& eval) {
  if (eval.scores.empty()) throw ConfigError("no scores requested");
  std::vector<EvalReport> out;
  for (auto kind : eval.scores) {
    const auto scored = score_logits(id_logits, ood_logits, kind);
    out.push_back(evaluate(scored, eval.tpr_target, eval.ood_margin,
                           std::numeric_limits<double>::quiet_NaN()));
  }
  return out;
}

json RunManifest::to_json() const {
  json arts = json::array();
  for (const auto& a : artifacts) {
    arts.push_back({{"path", a.path}, {"checksum", a.checksum}});
  }
  return {{"schema", "mvol.manifest.v1"},
          {"command", command},
          {"tool_version", tool_version},
          {"config_hash", config_hash},
          {"seed", seed},
          {"wall_clock_seconds", wall_clock_seconds},
          {"started_at", started_at},
          {"output_dir", output_dir},
          {"config", config},
          {"args", args},
          {"artifacts", arts}};
}

RunManifest RunManifest::from_json(const json& j) {
  try {
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    m.started_at = j.at("started_at").get<std::string>();
    m.output_dir = j.at("output_dir").get<std::string>();
    m.config = j.at("config");
    m.args = j.at("args");
    for (const auto& a : j.at("artifacts")) {
      m.artifacts.push_back({a.at("path").get<std::string>(),
                             a.at("checksum").get<std::string>()});
    }
    return m;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed manifest: ") + e.what());
  }
}

namespace {

constexpr const char* kDictFile = "dictionary.mvfd";
constexpr const char* kTrainIdFile = "train_id.mvdm";
constexpr const char* kAuxFile = "aux.mvdm";
constexpr const char* kTestIdFile = "test_id.mvdm";
constexpr const char* kTestOodFile = "test_ood.mvdm";
constexpr const char* kModelFile = "model.mvnt";

std::string checksum_of(std::string_view bytes) {
  return hex64(fnv1a64(bytes));
}

// Collects the artifacts written by one command.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  const fs::path& dir() const { return dir_; }

  void write(const std::string& rel, std::string_view bytes) {
    write_file_atomic(dir_ / rel, bytes);
    record(rel, checksum_of(bytes));
  }
  void record_existing(const std::string& rel) {
    record(rel, file_checksum(dir_ / rel));
  }
  const std::vector<ArtifactEntry>& list() const { return list_; }

 private:
  void record(const std::string& rel, std::string checksum) {
    for (auto& a : list_) {
      if (a.path == rel) {
        a.checksum = std::move(checksum);
        return;
      }
    }
    list_.push_back({rel, std::move(checksum)});
  }

  fs::path dir_;
  std::vector<ArtifactEntry> list_;
};

void write_dataset(Outputs& out, const std::string& rel, const Dataset& data) {
  out.write(rel, encode_dataset(data));
  out.write(rel + ".json", dataset_sidecar(data).dump(2) + "\n");
}

void write_data(Outputs& out, const ExperimentData& data) {
  out.write(kDictFile, encode_dictionary(data.dict));
  write_dataset(out, kTrainIdFile, data.train_id);
  write_dataset(out, kAuxFile, data.aux);
  write_dataset(out, kTestIdFile, data.test_id);
  write_dataset(out, kTestOodFile, data.test_ood);
}

bool data_present(const fs::path& dir) {
  for (const char* f :
       {kDictFile, kTrainIdFile, kAuxFile, kTestIdFile, kTestOodFile}) {
    if (!fs::exists(dir / f)) return false;
  }
  return true;
}

void check_loaded(const Dataset& d, const ExperimentConfig& cfg,
                  const char* stream, std::size_t n, double alpha,
                  const char* file) {
  if (!(d.gen_config == cfg.gen) ||
      d.seed != Rng::derive_seed(cfg.seed, stream) || d.size() != n ||
      d.alpha != alpha) {
    throw ConfigError(std::string(file) +
                      " in the output directory was generated by a "
                      "different config; use a fresh --out directory");
  }
}

// Loads the datasets of a previous generate/train run, or generates and
// writes them.
ExperimentData ensure_data(const ExperimentConfig& cfg, Outputs& out,
                           int workers) {
  const fs::path& dir = out.dir();
  if (!data_present(dir)) {
    auto data = generate_data(cfg, workers);
    write_data(out, data);
    return data;
  }
  ExperimentData data;
  data.dict = load_dictionary(dir / kDictFile);
  data.train_id = load_dataset(dir / kTrainIdFile);
  data.aux = load_dataset(dir / kAuxFile);
  data.test_id = load_dataset(dir / kTestIdFile);
  data.test_ood = load_dataset(dir / kTestOodFile);
  check_loaded(data.train_id, cfg, "gen/train_id", cfg.data.n_train, 0.0,
               kTrainIdFile);
  check_loaded(data.aux, cfg, "gen/aux", cfg.data.n_aux, cfg.data.alpha,
               kAuxFile);
  check_loaded(data.test_id, cfg, "gen/test_id", cfg.data.n_test_id, 0.0,
               kTestIdFile);
  check_loaded(data.test_ood, cfg, "gen/test_ood", cfg.data.n_test_ood, 0.0,
               kTestOodFile);
  Rng dict_rng = Rng::derive(cfg.seed, "gen/dict");
  if (!(data.dict ==
        make_feature_dictionary(cfg.gen.k, cfg.gen.d, dict_rng))) {
    throw ConfigError(std::string(kDictFile) +
                      " was generated by a different config");
  }
  out.record_existing(kDictFile);
  for (const char* f : {kTrainIdFile, kAuxFile, kTestIdFile, kTestOodFile}) {
    out.record_existing(f);
    out.record_existing(std::string(f) + ".json");
  }
  return data;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class ManifestScope {
 public:
  ManifestScope(std::string command, const ExperimentConfig& cfg)
      : start_(std::chrono::steady_clock::now()) {
    manifest_.command = std::move(command);
    manifest_.config_hash = cfg.hash();
    manifest_.seed = cfg.seed;
    manifest_.started_at = utc_now();
    manifest_.output_dir = cfg.output_dir;
    manifest_.config = cfg.to_json();
  }

  RunManifest& manifest() { return manifest_; }

  RunManifest finish(const Outputs& out) {
    manifest_.artifacts = out.list();
    manifest_.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      start_)
            .count();
    write_file_atomic(out.dir() / kManifestName,
                      manifest_.to_json().dump(2) + "\n");
    return manifest_;
  }

 private:
  std::chrono::steady_clock::time_point start_;
  RunManifest manifest_;
};

std::string trace_csv(const std::vector<EpochStats>& trace) {
  std::string out = std::string("# schema: ") + kTraceSchema + "\n";
  out +=
      "epoch,id_loss,ood_loss,train_acc,maxlogit_mean_id,maxlogit_mean_ood\n";
  for (const auto& e : trace) {
    out += std::to_string(e.epoch) + "," + format_double(e.id_loss) + "," +
           format_double(e.ood_loss) + "," + format_double(e.train_acc) + "," +
           format_double(e.maxlogit_mean_id) + "," +
           format_double(e.maxlogit_mean_ood) + "\n";
  }
  return out;
}

std::string teacher_file(std::size_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "teacher_%02zu.mvnt", t);
  return buf;
}

void write_reports(Outputs& out, const std::vector<EvalReport>& reports) {
  std::string csv = std::string("# schema: ") + kEvalSchema + "\n" +
                    EvalReport::csv_header() + "\n";
  for (const auto& r : reports) {
    out.write("report_" + r.score_name + ".json", r.to_json().dump(2) + "\n");
    csv += r.csv_row() + "\n";
  }
  out.write("eval.csv", csv);
}

}  // namespace

RunManifest cmd_generate(const ExperimentConfig& cfg, int workers) {
  cfg.validate();
  ManifestScope scope("generate", cfg);
  Outputs out(cfg.output_dir);
  write_data(out, generate_data(cfg, workers));
  return scope.finish(out);
}

RunManifest cmd_train(const ExperimentConfig& cfg, int workers) {
  cfg.validate();
  ManifestScope scope("train", cfg);
  Outputs out(cfg.output_dir);
  const auto data = ensure_data(cfg, out, workers);
  const auto result = train_experiment(cfg, data, workers);
  for (std::size_t t = 0; t < result.teachers.size(); ++t) {
    out.write(teacher_file(t), encode_network(result.teachers[t]));
  }
  out.write(kModelFile, encode_network(result.final_model.net));
  out.write("trace.csv", trace_csv(result.final_model.trace));
  return scope.finish(out);
}

RunManifest cmd_eval(const ExperimentConfig& cfg, int workers) {
  cfg.validate();
  ManifestScope scope("eval", cfg);
  Outputs out(cfg.output_dir);
  const auto data = ensure_data(cfg, out, workers);
  const fs::path model_path = out.dir() / kModelFile;
  if (!fs::exists(model_path)) {
    throw IoError("no checkpoint at " + model_path.string() +
                  "; run `mvol train` first");
  }
  const Network net = load_network(model_path);
  out.record_existing(kModelFile);
  const auto ev = evaluate_model(net, data, cfg.eval, workers);
  write_reports(out, ev.reports);

  json diag = ev.diagnostics_json();
  diag["proposition1"] = check_proposition1(data.test_id, data.test_ood).to_json();
  std::vector<bool> union_mask(2 * cfg.gen.k, false);
  std::size_t n_teachers = 0;
  for (; fs::exists(out.dir() / teacher_file(n_teachers)); ++n_teachers) {
    out.record_existing(teacher_file(n_teachers));
    const auto teacher = load_network(out.dir() / teacher_file(n_teachers));
    const auto cov =
        feature_coverage(teacher, data.dict, cfg.eval.coverage_threshold);
    for (std::size_t f = 0; f < union_mask.size(); ++f) {
      union_mask[f] = union_mask[f] || cov.learned[f];
    }
  }
  if (n_teachers > 0) {
    diag["teachers"] = n_teachers;
    diag["teacher_union_learned"] =
        std::count(union_mask.begin(), union_mask.end(), true);
  }
  out.write("diagnostics.json", diag.dump(2) + "\n");
  out.write("logits.csv", logits_csv(ev.id_logits, ev.ood_logits));
  return scope.finish(out);
}

RunManifest cmd_sweep(const ExperimentConfig& cfg, int workers) {
  cfg.validate();
  if (!cfg.sweep) throw ConfigError("sweep: config has no sweep section");
  ManifestScope scope("sweep", cfg);
  Outputs out(cfg.output_dir);
  const auto rows = run_sweep(cfg, workers);
  out.write("sweep.csv", sweep_csv(rows));
  out.write("sweep_summary.csv", sweep_summary_csv(summarize_sweep(rows)));
  return scope.finish(out);
}

RunManifest cmd_score_import(const ExperimentConfig& cfg,
                             const fs::path& csv_path) {
  cfg.validate();
  ManifestScope scope("score-import", cfg);
  const std::string text = read_file(csv_path);
  scope.manifest().args = {{"input", fs::absolute(csv_path).string()},
                           {"input_checksum", checksum_of(text)}};
  Eigen::MatrixXd id, ood;
  parse_logits_csv(text, id, ood);
  Outputs out(cfg.output_dir);
  write_reports(out, evaluate_logits(id, ood, cfg.eval));
  return scope.finish(out);
}

ReplayResult cmd_replay(const fs::path& manifest_path, int workers,
                        std::optional<fs::path> replay_dir) {
  const auto manifest = RunManifest::from_json(
      parse_json(read_file(manifest_path), manifest_path.string()));
  ExperimentConfig cfg = ExperimentConfig::from_json(manifest.config);
  if (cfg.hash() != manifest.config_hash) {
    throw IoError("manifest config does not match its recorded hash");
  }
  const fs::path original = manifest_path.parent_path();
  ReplayResult result;
  result.replay_dir =
      replay_dir ? *replay_dir : fs::path(original.string() + ".replay");
  if (fs::exists(result.replay_dir)) {
    if (!fs::exists(result.replay_dir / kManifestName)) {
      throw ConfigError("replay directory " + result.replay_dir.string() +
                        " exists and is not a previous run directory");
    }
    fs::remove_all(result.replay_dir);
  }
  cfg.output_dir = result.replay_dir.string();

  if (manifest.command == "generate") {
    cmd_generate(cfg, workers);
  } else if (manifest.command == "train") {
    cmd_train(cfg, workers);
  } else if (manifest.command == "eval") {
    // The checkpoint is an input of eval; reproduce it first.
    cmd_train(cfg, workers);
    cmd_eval(cfg, workers);
  } else if (manifest.command == "sweep") {
    cmd_sweep(cfg, workers);
  } else if (manifest.command == "score-import") {
    const fs::path input = manifest.args.at("input").get<std::string>();
    if (checksum_of(read_file(input)) !=
        manifest.args.at("input_checksum").get<std::string>()) {
      throw IoError("score-import input " + input.string() +
                    " changed since the original run");
    }
    cmd_score_import(cfg, input);
  } else {
    throw IoError("manifest has unknown command '" + manifest.command + "'");
  }

  for (const auto& a : manifest.artifacts) {
    const fs::path p = result.replay_dir / a.path;
    if (fs::exists(p) && file_checksum(p) == a.checksum) {
      result.matched.push_back(a.path);
    } else {
      result.mismatched.push_back(a.path);
    }
  }
  return result;
}

}  // namespace mvol
