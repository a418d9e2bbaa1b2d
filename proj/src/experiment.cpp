// Copyright (C) 2026 The eqsim-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "eqsim/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

namespace eqsim {

namespace {

const std::map<std::string, std::set<std::string>>& config_schema() {
  static const std::map<std::string, std::set<std::string>> schema{
      {"run", {"label", "seed", "output_dir"}},
      {"world", {"objects", "counts", "locations", "attributes", "d_img", "d_txt", "noise_std"}},
      {"model", {"embed_dim", "hidden_img", "hidden_txt"}},
      {"train",
       {"steps", "batch_size", "learning_rate", "optimizer", "adam_beta1", "adam_beta2", "adam_epsilon",
        "edit_fraction"}},
      {"eqsim", {"mode", "alpha", "beta", "k_close", "use_softmax"}},
      {"eval",
       {"n_eval", "mix_object", "mix_count", "mix_location", "mix_attribute", "valse_threshold", "recall_ks", "bins",
        "metrics"}},
  };
  return schema;
}

const std::set<std::string>& known_metrics() {
  static const std::set<std::string> names{"group", "valse", "recall", "eqscore"};
  return names;
}

std::string mix_key(Aspect a) { return "mix_" + std::string(to_string(a)); }

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) parts.push_back(item);
  return parts;
}

std::string join(const std::vector<std::string>& parts, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.push_back(sep);
    out += parts[i];
  }
  return out;
}

// Field readers that check ranges and report the record line on failure.
long read_long_min(const Record& r, std::string_view key, long fallback, long min) {
  const long v = r.get_long(key, fallback);
  if (v < min) r.fail(key, "must be >= " + std::to_string(min));
  return v;
}

double read_nonneg(const Record& r, std::string_view key, double fallback) {
  const double v = r.get_double(key, fallback);
  if (v < 0.0) r.fail(key, "must be >= 0");
  return v;
}

std::vector<double> to_std(const EmbVector& v) { return {v.data(), v.data() + v.size()}; }

EmbVector to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const EmbVector>(v.data(), static_cast<Index>(v.size()));
}

std::vector<double> slots_values(const SemanticSlots& s) {
  return {double(s.object), double(s.count), double(s.location), double(s.attribute)};
}

SemanticSlots parse_slots(const Record& r, std::string_view key) {
  const auto v = r.get_longs(key);
  if (v.size() != 4) r.fail(key, "expected 4 comma-separated slot values");
  return {static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2]), static_cast<int>(v[3])};
}

Record loss_record(const std::string& kind, const LossBreakdown& l) {
  Record r(kind);
  r.add("retrieval", l.retrieval)
      .add("equivariance", l.equivariance)
      .add("total", l.total)
      .add("n_close", l.n_close_pairs)
      .add("n_distant", l.n_distant_pairs);
  return r;
}

LossBreakdown parse_loss(const Record& r) {
  LossBreakdown l;
  l.retrieval = r.get_double("retrieval");
  l.equivariance = r.get_double("equivariance");
  l.total = r.get_double("total");
  l.n_close_pairs = r.get_long("n_close");
  l.n_distant_pairs = r.get_long("n_distant");
  return l;
}

void add_config_echo(Document& doc, const ExperimentConfig& cfg) {
  for (auto& r : config_records(cfg)) doc.add(std::move(r));
}

}  // namespace

bool EvalConfig::wants(const std::string& metric) const {
  return std::find(metrics.begin(), metrics.end(), metric) != metrics.end();
}

void ExperimentConfig::apply_seed(std::uint64_t new_seed) {
  seed = new_seed;
  world.seed = new_seed;
  train.seed = new_seed;
}

void ExperimentConfig::validate() const {
  require(!run_label.empty(), ErrorKind::InvalidConfig, "run.label must be nonempty");
  world.validate();
  require(embed_dim >= 1, ErrorKind::InvalidConfig, "model.embed_dim must be >= 1");
  require(hidden_img >= 0 && hidden_txt >= 0, ErrorKind::InvalidConfig, "model hidden widths must be >= 0");
  require(edit_fraction >= 0.0 && edit_fraction <= 1.0, ErrorKind::InvalidConfig,
          "train.edit_fraction must lie in [0, 1]");
  train.validate();
  require(eval.n_eval >= 0, ErrorKind::InvalidConfig, "eval.n_eval must be >= 0");
  double total = 0.0;
  for (Aspect a : kAspects) {
    const double w = eval.aspect_mix[static_cast<std::size_t>(a)];
    require(std::isfinite(w) && w >= 0.0, ErrorKind::InvalidConfig, "eval." + mix_key(a) + " must be >= 0");
    total += w;
  }
  require(total > 0.0, ErrorKind::InvalidConfig, "eval.mix_* weights must not all be zero");
  require(eval.bins >= 1, ErrorKind::InvalidConfig, "eval.bins must be >= 1");
  for (Index k : eval.recall_ks) require(k >= 1, ErrorKind::InvalidConfig, "eval.recall_ks entries must be >= 1");
  for (const auto& m : eval.metrics)
    require(known_metrics().contains(m), ErrorKind::InvalidConfig, "eval.metrics: unknown metric '" + m + "'");
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.world.cardinality = {8, 4, 4, 6};
  cfg.world.d_img = 12;
  cfg.world.d_txt = 8;
  cfg.world.noise_std = 0.1;
  cfg.embed_dim = 16;
  cfg.edit_fraction = 0.5;
  cfg.train.steps = 2000;
  cfg.train.batch_size = 16;
  cfg.train.learning_rate = 1e-3;
  cfg.train.optimizer = OptimizerKind::adam;
  cfg.train.eqsim = EqSimConfig{0.04, 0.5, 8, false, EqSimMode::hybrid};
  cfg.apply_seed(1);
  return cfg;
}

ExperimentConfig parse_experiment_config(const std::vector<Record>& records) {
  ExperimentConfig cfg = default_experiment_config();
  std::uint64_t seed = cfg.seed;
  for (const auto& r : records) {
    const auto schema = config_schema().find(r.kind());
    if (schema == config_schema().end()) continue;
    for (const auto& [key, value] : r.fields())
      if (!schema->second.contains(key)) r.fail(key, "unknown field");

    if (r.kind() == "run") {
      cfg.run_label = r.get_string("label", cfg.run_label);
      if (cfg.run_label.empty()) r.fail("label", "must be nonempty");
      seed = r.get_u64("seed", seed);
      cfg.output_dir = r.get_string("output_dir", cfg.output_dir);
    } else if (r.kind() == "world") {
      auto& c = cfg.world.cardinality;
      c[0] = static_cast<int>(read_long_min(r, "objects", c[0], 1));
      c[1] = static_cast<int>(read_long_min(r, "counts", c[1], 1));
      c[2] = static_cast<int>(read_long_min(r, "locations", c[2], 1));
      c[3] = static_cast<int>(read_long_min(r, "attributes", c[3], 1));
      cfg.world.d_img = read_long_min(r, "d_img", cfg.world.d_img, 4);
      cfg.world.d_txt = read_long_min(r, "d_txt", cfg.world.d_txt, 4);
      cfg.world.noise_std = read_nonneg(r, "noise_std", cfg.world.noise_std);
    } else if (r.kind() == "model") {
      cfg.embed_dim = read_long_min(r, "embed_dim", cfg.embed_dim, 1);
      cfg.hidden_img = read_long_min(r, "hidden_img", cfg.hidden_img, 0);
      cfg.hidden_txt = read_long_min(r, "hidden_txt", cfg.hidden_txt, 0);
    } else if (r.kind() == "train") {
      auto& t = cfg.train;
      t.steps = read_long_min(r, "steps", t.steps, 0);
      t.batch_size = read_long_min(r, "batch_size", t.batch_size, 2);
      t.learning_rate = read_nonneg(r, "learning_rate", t.learning_rate);
      if (r.has("optimizer")) {
        const auto& o = r.at("optimizer");
        if (o == "sgd") t.optimizer = OptimizerKind::sgd;
        else if (o == "adam") t.optimizer = OptimizerKind::adam;
        else r.fail("optimizer", "expected sgd|adam, found '" + o + "'");
      }
      t.adam.beta1 = r.get_double("adam_beta1", t.adam.beta1);
      if (t.adam.beta1 < 0.0 || t.adam.beta1 >= 1.0) r.fail("adam_beta1", "must lie in [0, 1)");
      t.adam.beta2 = r.get_double("adam_beta2", t.adam.beta2);
      if (t.adam.beta2 < 0.0 || t.adam.beta2 >= 1.0) r.fail("adam_beta2", "must lie in [0, 1)");
      t.adam.epsilon = r.get_double("adam_epsilon", t.adam.epsilon);
      if (t.adam.epsilon <= 0.0) r.fail("adam_epsilon", "must be > 0");
      cfg.edit_fraction = r.get_double("edit_fraction", cfg.edit_fraction);
      if (cfg.edit_fraction < 0.0 || cfg.edit_fraction > 1.0) r.fail("edit_fraction", "must lie in [0, 1]");
    } else if (r.kind() == "eqsim") {
      auto& e = cfg.train.eqsim;
      if (r.has("mode")) {
        try {
          e.mode = parse_eqsim_mode(r.at("mode"));
        } catch (const Error& ex) {
          r.fail("mode", ex.what());
        }
      }
      e.alpha = read_nonneg(r, "alpha", e.alpha);
      e.beta = read_nonneg(r, "beta", e.beta);
      e.k_close = read_long_min(r, "k_close", e.k_close, 0);
      e.use_softmax = r.get_bool("use_softmax", e.use_softmax);
    } else if (r.kind() == "eval") {
      auto& ev = cfg.eval;
      ev.n_eval = read_long_min(r, "n_eval", ev.n_eval, 0);
      for (Aspect a : kAspects) {
        auto& w = ev.aspect_mix[static_cast<std::size_t>(a)];
        w = read_nonneg(r, mix_key(a), w);
      }
      ev.valse_threshold = r.get_double("valse_threshold", ev.valse_threshold);
      if (r.has("recall_ks")) {
        ev.recall_ks.clear();
        for (long k : r.get_longs("recall_ks")) {
          if (k < 1) r.fail("recall_ks", "entries must be >= 1");
          ev.recall_ks.push_back(k);
        }
      }
      ev.bins = static_cast<int>(read_long_min(r, "bins", ev.bins, 1));
      if (r.has("metrics")) {
        ev.metrics = split_list(r.at("metrics"));
        for (const auto& m : ev.metrics)
          if (!known_metrics().contains(m)) r.fail("metrics", "unknown metric '" + m + "'");
      }
    }
  }
  cfg.apply_seed(seed);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(parse_document(read_file(path), "config"));
}

std::vector<Record> config_records(const ExperimentConfig& cfg) {
  std::vector<Record> out;
  Record run("run");
  run.add("label", cfg.run_label).add("seed", cfg.seed).add("output_dir", cfg.output_dir);
  out.push_back(run);

  Record world("world");
  world.add("objects", cfg.world.cardinality[0])
      .add("counts", cfg.world.cardinality[1])
      .add("locations", cfg.world.cardinality[2])
      .add("attributes", cfg.world.cardinality[3])
      .add("d_img", static_cast<long>(cfg.world.d_img))
      .add("d_txt", static_cast<long>(cfg.world.d_txt))
      .add("noise_std", cfg.world.noise_std);
  out.push_back(world);

  Record model("model");
  model.add("embed_dim", static_cast<long>(cfg.embed_dim))
      .add("hidden_img", static_cast<long>(cfg.hidden_img))
      .add("hidden_txt", static_cast<long>(cfg.hidden_txt));
  out.push_back(model);

  Record train("train");
  train.add("steps", cfg.train.steps)
      .add("batch_size", static_cast<long>(cfg.train.batch_size))
      .add("learning_rate", cfg.train.learning_rate)
      .add("optimizer", cfg.train.optimizer == OptimizerKind::adam ? "adam" : "sgd")
      .add("adam_beta1", cfg.train.adam.beta1)
      .add("adam_beta2", cfg.train.adam.beta2)
      .add("adam_epsilon", cfg.train.adam.epsilon)
      .add("edit_fraction", cfg.edit_fraction);
  out.push_back(train);

  const auto& e = cfg.train.eqsim;
  Record eq("eqsim");
  eq.add("mode", to_string(e.mode))
      .add("alpha", e.alpha)
      .add("beta", e.beta)
      .add("k_close", static_cast<long>(e.k_close))
      .add("use_softmax", e.use_softmax);
  out.push_back(eq);

  Record ev("eval");
  ev.add("n_eval", cfg.eval.n_eval);
  for (Aspect a : kAspects) ev.add(mix_key(a), cfg.eval.aspect_mix[static_cast<std::size_t>(a)]);
  std::vector<std::string> ks;
  for (Index k : cfg.eval.recall_ks) ks.push_back(std::to_string(k));
  ev.add("valse_threshold", cfg.eval.valse_threshold)
      .add("recall_ks", join(ks))
      .add("bins", cfg.eval.bins)
      .add("metrics", join(cfg.eval.metrics));
  out.push_back(ev);
  return out;
}

std::string format_config(const ExperimentConfig& cfg) {
  Document doc("config");
  add_config_echo(doc, cfg);
  return doc.str();
}

// Dataset files ---------------------------------------------------------------

std::string format_eval_set(const ExperimentConfig& cfg, const std::vector<PairSample>& samples) {
  Document doc("dataset");
  add_config_echo(doc, cfg);
  Record info("dataset");
  info.add("split", "eval")
      .add("n", static_cast<long>(samples.size()))
      .add("substream", "eval")
      .add("minimal_change", "hamming=1 slot edit");
  doc.add(info);
  for (const auto& s : samples) {
    Record r("sample");
    r.add("id", s.id)
        .add("aspect", to_string(s.edited_aspect))
        .add("hamming", s.hamming)
        .add("slots1", slots_values(s.slots1))
        .add("slots2", slots_values(s.slots2))
        .add("image1", to_std(s.image1))
        .add("text1", to_std(s.text1))
        .add("image2", to_std(s.image2))
        .add("text2", to_std(s.text2));
    doc.add(r);
  }
  return doc.str();
}

std::vector<PairSample> parse_eval_set(const std::vector<Record>& records) {
  std::vector<PairSample> out;
  for (const auto& r : records) {
    if (r.kind() != "sample") continue;
    PairSample s;
    s.id = r.get_long("id");
    try {
      s.edited_aspect = parse_aspect(r.at("aspect"));
    } catch (const Error& e) {
      r.fail("aspect", e.what());
    }
    s.slots1 = parse_slots(r, "slots1");
    s.slots2 = parse_slots(r, "slots2");
    s.hamming = static_cast<int>(r.get_long("hamming"));
    if (s.hamming != hamming(s.slots1, s.slots2)) r.fail("hamming", "does not match slots1/slots2");
    s.image1 = to_eigen(r.get_doubles("image1"));
    s.text1 = to_eigen(r.get_doubles("text1"));
    s.image2 = to_eigen(r.get_doubles("image2"));
    s.text2 = to_eigen(r.get_doubles("text2"));
    if (s.image1.size() != s.image2.size()) r.fail("image2", "dimension differs from image1");
    if (s.text1.size() != s.text2.size()) r.fail("text2", "dimension differs from text1");
    out.push_back(std::move(s));
  }
  return out;
}

// Checkpoints -----------------------------------------------------------------

namespace {

void add_matrix(Document& doc, const std::string& name, const Matrix<double>& m) {
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) values.push_back(m(r, c));
  Record rec("param");
  rec.add("name", name).add("rows", static_cast<long>(m.rows())).add("cols", static_cast<long>(m.cols()));
  rec.add("values", values);
  doc.add(rec);
}

Matrix<double> read_matrix(const Record& r, Index rows, Index cols) {
  if (r.get_long("rows") != rows || r.get_long("cols") != cols)
    r.fail("rows", "shape " + r.at("rows") + "x" + r.at("cols") + " does not match the declared model shape");
  const auto values = r.get_doubles("values");
  if (static_cast<Index>(values.size()) != rows * cols) r.fail("values", "wrong number of entries");
  Matrix<double> m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = values[static_cast<std::size_t>(i * cols + j)];
  return m;
}

}  // namespace

std::string format_checkpoint(const Checkpoint& ckpt) {
  Document doc("checkpoint");
  add_config_echo(doc, ckpt.config);
  const auto shape = ckpt.params.shape();
  Record s("shape");
  s.add("d_img", static_cast<long>(shape.d_img))
      .add("d_txt", static_cast<long>(shape.d_txt))
      .add("embed_dim", static_cast<long>(shape.embed_dim))
      .add("hidden_img", static_cast<long>(shape.hidden_img))
      .add("hidden_txt", static_cast<long>(shape.hidden_txt));
  doc.add(s);
  for (Modality m : {Modality::image, Modality::text}) {
    const auto& t = ckpt.params.tower(m);
    const std::string prefix = m == Modality::image ? "image." : "text.";
    if (t.has_hidden()) {
      add_matrix(doc, prefix + "hidden_weights", t.hidden_weights);
      add_matrix(doc, prefix + "hidden_bias", t.hidden_bias);
    }
    add_matrix(doc, prefix + "weights", t.weights);
  }
  Record temp("temperature");
  temp.add("log_temperature", ckpt.params.log_temperature);
  doc.add(temp);
  if (ckpt.final_loss) doc.add(loss_record("final_loss", *ckpt.final_loss));
  return doc.str();
}

Checkpoint parse_checkpoint(const std::vector<Record>& records) {
  Checkpoint ckpt;
  ckpt.config = parse_experiment_config(records);
  const Record* shape_rec = nullptr;
  std::map<std::string, const Record*> params;
  const Record* temp = nullptr;
  for (const auto& r : records) {
    if (r.kind() == "shape") shape_rec = &r;
    else if (r.kind() == "param") params[r.at("name")] = &r;
    else if (r.kind() == "temperature") temp = &r;
    else if (r.kind() == "final_loss") ckpt.final_loss = parse_loss(r);
  }
  require(shape_rec != nullptr, ErrorKind::Schema, "checkpoint has no shape record");
  require(temp != nullptr, ErrorKind::Schema, "checkpoint has no temperature record");
  ModelShape shape{shape_rec->get_long("d_img"), shape_rec->get_long("d_txt"), shape_rec->get_long("embed_dim"),
                   shape_rec->get_long("hidden_img", 0), shape_rec->get_long("hidden_txt", 0)};
  const auto need = [&](const std::string& name) -> const Record& {
    const auto it = params.find(name);
    if (it == params.end()) throw Error(ErrorKind::Schema, "checkpoint is missing param '" + name + "'");
    return *it->second;
  };
  const auto load_tower = [&](const std::string& prefix, Index input, Index hidden) {
    Tower<double> t;
    if (hidden > 0) {
      t.hidden_weights = read_matrix(need(prefix + "hidden_weights"), hidden, input);
      t.hidden_bias = read_matrix(need(prefix + "hidden_bias"), hidden, 1);
      t.weights = read_matrix(need(prefix + "weights"), shape.embed_dim, hidden);
    } else {
      t.weights = read_matrix(need(prefix + "weights"), shape.embed_dim, input);
    }
    return t;
  };
  ckpt.params.image = load_tower("image.", shape.d_img, shape.hidden_img);
  ckpt.params.text = load_tower("text.", shape.d_txt, shape.hidden_txt);
  ckpt.params.log_temperature = temp->get_double("log_temperature");
  return ckpt;
}

std::string format_history(const ExperimentConfig& cfg, const std::vector<LossBreakdown>& history) {
  Document doc("history");
  add_config_echo(doc, cfg);
  for (std::size_t t = 0; t < history.size(); ++t) {
    Record r = loss_record("step", history[t]);
    Record withstep("step");
    withstep.add("index", static_cast<long>(t));
    for (const auto& [k, v] : r.fields()) withstep.add(k, v);
    doc.add(withstep);
  }
  return doc.str();
}

// Evaluation ------------------------------------------------------------------

std::vector<SimilarityGrid> eval_grids(const EncoderParams& params, const std::vector<PairSample>& samples) {
  const auto shape = params.shape();
  std::vector<SimilarityGrid> grids;
  grids.reserve(samples.size());
  for (const auto& s : samples) {
    require(s.image1.size() == shape.d_img && s.image2.size() == shape.d_img, ErrorKind::ShapeMismatch,
            "eval sample " + std::to_string(s.id) + ": image dim " + std::to_string(s.image1.size()) +
                ", checkpoint expects " + std::to_string(shape.d_img));
    require(s.text1.size() == shape.d_txt && s.text2.size() == shape.d_txt, ErrorKind::ShapeMismatch,
            "eval sample " + std::to_string(s.id) + ": text dim " + std::to_string(s.text1.size()) +
                ", checkpoint expects " + std::to_string(shape.d_txt));
    grids.push_back(grid_from_embeddings(encode(params, Modality::image, s.image1),
                                         encode(params, Modality::text, s.text1),
                                         encode(params, Modality::image, s.image2),
                                         encode(params, Modality::text, s.text2)));
  }
  return grids;
}

EquivarianceSummary summarize_equivariance(const std::vector<SimilarityGrid>& grids, int bins) {
  require(!grids.empty(), ErrorKind::EmptyEvalSet, "no grids to summarize");
  std::vector<double> text, image, combined;
  for (const auto& g : grids) {
    const auto e = equivariance_score(g);
    text.push_back(e.text_direction);
    image.push_back(e.image_direction);
    combined.push_back(e.combined);
  }
  // [0, max] with the maximum included; a floor of 1e-9 keeps round-off
  // residue of an exactly equivariant model inside the first bin.
  const auto hist = [&](const std::vector<double>& v) {
    const double top = std::max(*std::max_element(v.begin(), v.end()), 1e-9);
    return histogram(v, bins, std::pair{0.0, std::nextafter(top, std::numeric_limits<double>::infinity())});
  };
  return {hist(text), hist(image), hist(combined)};
}

RunReport evaluate(const Checkpoint& ckpt, const std::vector<PairSample>& samples, const EvalConfig& eval) {
  require(!samples.empty(), ErrorKind::EmptyEvalSet, "eval set is empty");
  RunReport report;
  report.config = ckpt.config;
  report.config.eval = eval;
  report.final_loss = ckpt.final_loss;
  report.n_eval = static_cast<long>(samples.size());
  const auto grids = eval_grids(ckpt.params, samples);

  if (eval.wants("group")) {
    report.group = group_metrics(grids);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      auto& a = report.per_aspect[samples[i].edited_aspect];
      const auto& p = report.group->per_sample[i];
      ++a.n;
      a.text_score += p.text;
      a.image_score += p.image;
      a.group_score += p.group;
    }
    for (auto& [aspect, a] : report.per_aspect) {
      a.text_score /= static_cast<double>(a.n);
      a.image_score /= static_cast<double>(a.n);
      a.group_score /= static_cast<double>(a.n);
    }
  }

  if (eval.wants("valse")) {
    // Each image scores its two candidate captions; softmax at the model
    // temperature turns the pair into probabilities.
    const double temperature = std::exp(ckpt.params.log_temperature);
    std::vector<double> correct, foil;
    for (const auto& g : grids) {
      const double p1 = 1.0 / (1.0 + std::exp((g.s12 - g.s11) / temperature));
      const double p2 = 1.0 / (1.0 + std::exp((g.s21 - g.s22) / temperature));
      correct.push_back(p1);
      foil.push_back(1.0 - p1);
      correct.push_back(p2);
      foil.push_back(1.0 - p2);
    }
    report.valse = valse_metrics(correct, foil, eval.valse_threshold);
  }

  if (eval.wants("recall") && samples.size() >= 2) {
    std::vector<EmbVector> images, texts;
    for (const auto& s : samples) {
      images.push_back(encode(ckpt.params, Modality::image, s.image1));
      texts.push_back(encode(ckpt.params, Modality::text, s.text1));
    }
    const auto m = batch_similarity(images, texts, 1.0);
    std::vector<Index> ks;
    for (Index k : eval.recall_ks)
      if (k <= m.n()) ks.push_back(k);
    report.recall = recall_at_k(m, ks);
  }

  if (eval.wants("eqscore")) report.equivariance = summarize_equivariance(grids, eval.bins);
  return report;
}

namespace {

void add_histogram(Document& doc, const std::string& kind, const std::string& component, const Histogram& h) {
  Record r(kind);
  r.add("component", component)
      .add("n", h.n_values)
      .add("mean", h.mean)
      .add("std", h.std)
      .add("edges", h.edges);
  std::vector<std::string> counts;
  for (long c : h.counts) counts.push_back(std::to_string(c));
  r.add("counts", join(counts));
  doc.add(r);
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

}  // namespace

std::string format_report(const RunReport& report) {
  Document doc("report");
  add_config_echo(doc, report.config);
  Record info("evaluation");
  info.add("n_eval", report.n_eval).add("minimal_change", "hamming=1 slot edit").add("grid_scores", "cosine");
  doc.add(info);

  if (report.final_loss) doc.add(loss_record("final_loss", *report.final_loss));
  else doc.add(Record("final_loss").add("status", "skipped"));

  if (report.group) {
    Record r("group");
    r.add("text_score", report.group->text_score)
        .add("image_score", report.group->image_score)
        .add("group_score", report.group->group_score)
        .add("n_samples", report.group->n_samples);
    doc.add(r);
    for (const auto& [aspect, a] : report.per_aspect) {
      Record ar("aspect");
      ar.add("name", to_string(aspect))
          .add("n", a.n)
          .add("text_score", a.text_score)
          .add("image_score", a.image_score)
          .add("group_score", a.group_score);
      doc.add(ar);
    }
  } else {
    doc.add(Record("group").add("status", "skipped"));
  }

  if (report.valse) {
    Record r("valse");
    r.add("acc", report.valse->acc)
        .add("p_c", report.valse->p_c)
        .add("p_f", report.valse->p_f)
        .add("min_pc_pf", report.valse->min_pc_pf)
        .add("threshold", report.valse->threshold);
    doc.add(r);
  } else {
    doc.add(Record("valse").add("status", "skipped"));
  }

  if (report.recall) {
    for (const auto& [direction, table] :
         {std::pair{"text_to_image", &report.recall->text_to_image},
          std::pair{"image_to_text", &report.recall->image_to_text}}) {
      for (const auto& [k, v] : *table) {
        Record r("recall");
        r.add("direction", direction).add("k", static_cast<long>(k)).add("value", v);
        doc.add(r);
      }
    }
  } else {
    doc.add(Record("recall").add("status", "skipped"));
  }

  if (report.equivariance) {
    add_histogram(doc, "eqscore", "text_direction", report.equivariance->text_direction);
    add_histogram(doc, "eqscore", "image_direction", report.equivariance->image_direction);
    add_histogram(doc, "eqscore", "combined", report.equivariance->combined);
  } else {
    doc.add(Record("eqscore").add("status", "skipped"));
  }

  doc.add(Record("timing").add("wall_clock_seconds", "skipped").add("reason", "printed to stdout only"));

  const auto summary = [&](const std::string& line) { doc.add(Record("summary").add("line", line)); };
  summary("run " + report.config.run_label + " seed " + std::to_string(report.config.seed) + " mode " +
          std::string(to_string(report.config.train.eqsim.mode)) + " n_eval " + std::to_string(report.n_eval));
  if (report.group)
    summary("group " + fixed(report.group->group_score) + " text " + fixed(report.group->text_score) + " image " +
            fixed(report.group->image_score));
  if (report.valse)
    summary("valse acc " + fixed(report.valse->acc) + " min(pc,pf) " + fixed(report.valse->min_pc_pf));
  if (report.equivariance)
    summary("eqscore combined mean " + fixed(report.equivariance->combined.mean) + " std " +
            fixed(report.equivariance->combined.std));
  return doc.str();
}

std::string format_eqscore(const ExperimentConfig& cfg, const EquivarianceSummary& summary) {
  Document doc("histogram");
  add_config_echo(doc, cfg);
  const auto add = [&](const std::string& component, const Histogram& h) {
    Record header("histogram");
    header.add("component", component)
        .add("n", h.n_values)
        .add("mean", h.mean)
        .add("std", h.std)
        .add("bins", static_cast<long>(h.counts.size()));
    doc.add(header);
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      Record row("bin");
      row.add("component", component).add("edge", h.edges[b]).add("count", h.counts[b]);
      doc.add(row);
    }
  };
  add("text_direction", summary.text_direction);
  add("image_direction", summary.image_direction);
  add("combined", summary.combined);
  return doc.str();
}

// Pipelines -------------------------------------------------------------------

std::vector<PairSample> make_eval_set(const ExperimentConfig& cfg) {
  const World world(cfg.world);
  Rng rng = Rng::substream(cfg.seed, "eval");
  return generate_eval_set(world, cfg.eval.n_eval, cfg.eval.aspect_mix, rng);
}

TrainResult run_training(const ExperimentConfig& cfg) {
  cfg.validate();
  const World world(cfg.world);
  TrainStream stream(world, cfg.train.batch_size, cfg.edit_fraction, Rng::substream(cfg.seed, "batches"));
  return train(cfg.train, cfg.model_shape(), stream);
}

// Benchmark-construction I/O -------------------------------------------------

namespace {

// Prefixes schema failures with the record's position among its kind.
template <typename F>
auto with_record_index(std::size_t index, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind() == ErrorKind::MissingField ? ErrorKind::Schema : e.kind(),
                "record " + std::to_string(index) + ": " + e.what());
  }
}

std::string nonempty(const Record& r, std::string_view key) {
  const auto& v = r.at(key);
  if (v.empty()) r.fail(key, "must be nonempty");
  return v;
}

}  // namespace

std::vector<AgFrame> parse_ag_frames(const std::vector<Record>& records) {
  std::vector<AgFrame> out;
  for (const auto& r : records) {
    if (r.kind() != "frame") continue;
    out.push_back(with_record_index(out.size(), [&] {
      return AgFrame{r.get_long("index"), nonempty(r, "attention"), nonempty(r, "spatial"), nonempty(r, "contact"),
                     nonempty(r, "object")};
    }));
    if (out.size() > 1 && out.back().index <= out[out.size() - 2].index)
      throw Error(ErrorKind::Schema, "record " + std::to_string(out.size() - 1) + ": frame.index must increase");
  }
  return out;
}

std::vector<GebcBoundary> parse_gebc_boundaries(const std::vector<Record>& records) {
  std::vector<GebcBoundary> out;
  for (const auto& r : records) {
    if (r.kind() != "boundary") continue;
    out.push_back(with_record_index(out.size(), [&] {
      return GebcBoundary{r.get_long("index"), nonempty(r, "caption_before"), nonempty(r, "caption_after"),
                          nonempty(r, "frame_before"), nonempty(r, "frame_after")};
    }));
    if (out.size() > 1 && out.back().index <= out[out.size() - 2].index)
      throw Error(ErrorKind::Schema, "record " + std::to_string(out.size() - 1) + ": boundary.index must increase");
  }
  return out;
}

std::vector<Segment> parse_youcook2_segments(const std::vector<Record>& records) {
  std::vector<Segment> out;
  for (const auto& r : records) {
    if (r.kind() != "segment") continue;
    out.push_back(with_record_index(out.size(), [&] {
      Segment s{r.get_long("start"), r.get_long("end"), nonempty(r, "caption")};
      if (s.start >= s.end) r.fail("end", "segment needs start < end");
      return s;
    }));
  }
  return out;
}

std::optional<std::set<long>> parse_face_frames(const std::vector<Record>& records) {
  std::optional<std::set<long>> out;
  for (const auto& r : records) {
    if (r.kind() != "face_frames") continue;
    if (!out) out.emplace();
    if (r.has("frames") && !r.at("frames").empty())
      for (long f : r.get_longs("frames")) out->insert(f);
  }
  return out;
}

// Command line ----------------------------------------------------------------

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

ExperimentConfig resolve_config(const CommonOptions& opts) {
  ExperimentConfig cfg = opts.config.empty() ? default_experiment_config() : load_experiment_config(opts.config);
  if (opts.seed) cfg.apply_seed(*opts.seed);
  if (!opts.out.empty()) cfg.output_dir = opts.out;
  cfg.validate();
  return cfg;
}

std::vector<Record> load_document(const std::string& path, std::string_view content) {
  return parse_document(read_file(path), content);
}

std::string stats_lines(const FilterStats& stats) {
  std::set<std::string> rules;
  for (const auto& [k, v] : stats.kept) rules.insert(k);
  for (const auto& [k, v] : stats.dropped) rules.insert(k);
  std::ostringstream ss;
  for (const auto& rule : rules) {
    const auto kept = stats.kept.contains(rule) ? stats.kept.at(rule) : 0;
    const auto dropped = stats.dropped.contains(rule) ? stats.dropped.at(rule) : 0;
    ss << "  " << rule << ": kept " << kept << ", dropped " << dropped << "\n";
  }
  return ss.str();
}

bool blank_document(const std::string& text) {
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first != std::string::npos && line[first] != '#') return false;
  }
  return true;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"eqsim: equivariant image-text similarity laboratory"};
  app.require_subcommand(1);

  CommonOptions gen_opts, train_opts, eval_opts, eqs_opts;
  std::string mode_override;
  std::string checkpoint_path, eval_set_path;
  std::optional<int> bins_override;
  std::string source, input, bench_out = ".";

  auto* gen = app.add_subcommand("generate", "Write the eval set and train-stream spec");
  gen->add_option("--config", gen_opts.config, "Config file");
  gen->add_option("--seed", gen_opts.seed, "Override the run seed");
  gen->add_option("--out", gen_opts.out, "Output directory");

  auto* trn = app.add_subcommand("train", "Train the toy dual encoder");
  trn->add_option("--config", train_opts.config, "Config file");
  trn->add_option("--seed", train_opts.seed, "Override the run seed");
  trn->add_option("--eqsim-mode", mode_override, "off|hybrid|v1_all|v2_all|v2_close_only");
  trn->add_option("--out", train_opts.out, "Output directory");

  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint on an eval set");
  evl->add_option("--config", eval_opts.config, "Config file (eval section overrides the checkpoint's)");
  evl->add_option("--checkpoint", checkpoint_path, "Checkpoint (default <out>/checkpoint.eqs)");
  evl->add_option("--eval-set", eval_set_path, "Eval set (default <out>/eval_set.eqs)");
  evl->add_option("--out", eval_opts.out, "Output directory");

  auto* eqs = app.add_subcommand("eqscore", "Equivariance-score histograms");
  eqs->add_option("--config", eqs_opts.config, "Config file");
  eqs->add_option("--checkpoint", checkpoint_path, "Checkpoint (default <out>/checkpoint.eqs)");
  eqs->add_option("--eval-set", eval_set_path, "Eval set (default <out>/eval_set.eqs)");
  eqs->add_option("--bins", bins_override, "Number of bins")->check(CLI::PositiveNumber);
  eqs->add_option("--out", eqs_opts.out, "Output directory");

  auto* bench = app.add_subcommand("benchbuild", "Run a benchmark-construction pipeline");
  bench->add_option("--source", source, "ag|gebc|youcook2")->required()->check(CLI::IsMember({"ag", "gebc", "youcook2"}));
  bench->add_option("--input", input, "Annotation file")->required();
  bench->add_option("--out", bench_out, "Output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (gen->parsed()) {
      const auto cfg = resolve_config(gen_opts);
      const auto samples = make_eval_set(cfg);
      const std::filesystem::path dir = cfg.output_dir;
      write_file(dir / "eval_set.eqs", format_eval_set(cfg, samples));

      const World world(cfg.world);
      TrainStream stream(world, cfg.train.batch_size, cfg.edit_fraction, Rng::substream(cfg.seed, "batches"));
      const Batch first = stream.next();
      Document spec("train_stream");
      add_config_echo(spec, cfg);
      Record info("stream");
      info.add("substream", "batches")
          .add("batch_size", static_cast<long>(cfg.train.batch_size))
          .add("edit_fraction", cfg.edit_fraction)
          .add("couples_per_batch", static_cast<long>(stream.couples_per_batch()))
          .add("steps", cfg.train.steps);
      spec.add(info);
      for (std::size_t i = 0; i < first.images.size(); ++i) {
        Record r("pair");
        r.add("batch", 0L)
            .add("index", static_cast<long>(i))
            .add("slots", slots_values(stream.last_slots()[i]))
            .add("image", to_std(first.images[i]))
            .add("text", to_std(first.texts[i]));
        spec.add(r);
      }
      write_file(dir / "train_stream.eqs", spec.str());

      std::map<Aspect, long> counts;
      for (const auto& s : samples) ++counts[s.edited_aspect];
      out << "wrote " << samples.size() << " eval samples to " << (dir / "eval_set.eqs").string() << "\n";
      for (Aspect a : kAspects) out << "  " << to_string(a) << ": " << counts[a] << "\n";
      out << "wrote train stream spec to " << (dir / "train_stream.eqs").string() << "\n";
      return 0;
    }

    if (trn->parsed()) {
      auto cfg = resolve_config(train_opts);
      if (!mode_override.empty()) cfg.train.eqsim.mode = parse_eqsim_mode(mode_override);
      cfg.validate();
      const auto start = std::chrono::steady_clock::now();
      const auto result = run_training(cfg);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const std::filesystem::path dir = cfg.output_dir;
      Checkpoint ckpt{cfg, result.params, std::nullopt};
      if (!result.history.empty()) ckpt.final_loss = result.history.back();
      write_file(dir / "checkpoint.eqs", format_checkpoint(ckpt));
      write_file(dir / "history.eqs", format_history(cfg, result.history));
      out << "trained " << cfg.train.steps << " steps (mode " << to_string(cfg.train.eqsim.mode) << ") in "
          << fixed(seconds, 2) << " s\n";
      if (ckpt.final_loss)
        out << "final loss: retrieval " << fixed(ckpt.final_loss->retrieval) << " equivariance "
            << fixed(ckpt.final_loss->equivariance) << " total " << fixed(ckpt.final_loss->total) << "\n";
      out << "wrote " << (dir / "checkpoint.eqs").string() << " and " << (dir / "history.eqs").string() << "\n";
      return 0;
    }

    if (evl->parsed() || eqs->parsed()) {
      const auto& opts = evl->parsed() ? eval_opts : eqs_opts;
      const std::filesystem::path dir = opts.out.empty() ? std::filesystem::path(".") : std::filesystem::path(opts.out);
      const auto ckpt_file = checkpoint_path.empty() ? dir / "checkpoint.eqs" : std::filesystem::path(checkpoint_path);
      const auto eval_file = eval_set_path.empty() ? dir / "eval_set.eqs" : std::filesystem::path(eval_set_path);
      const auto start = std::chrono::steady_clock::now();
      Checkpoint ckpt = parse_checkpoint(load_document(ckpt_file.string(), "checkpoint"));
      EvalConfig eval = ckpt.config.eval;
      if (!opts.config.empty()) eval = load_experiment_config(opts.config).eval;
      const auto samples = parse_eval_set(load_document(eval_file.string(), "dataset"));
      require(!samples.empty(), ErrorKind::EmptyEvalSet, "eval set '" + eval_file.string() + "' has no samples");

      if (evl->parsed()) {
        const auto report = evaluate(ckpt, samples, eval);
        write_file(dir / "report.eqs", format_report(report));
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (report.group)
          out << "group " << fixed(report.group->group_score) << " text " << fixed(report.group->text_score)
              << " image " << fixed(report.group->image_score) << "\n";
        if (report.equivariance)
          out << "equivariance combined mean " << fixed(report.equivariance->combined.mean) << " std "
              << fixed(report.equivariance->combined.std) << "\n";
        out << "wall_clock_seconds " << fixed(seconds, 3) << "\n";
        out << "wrote " << (dir / "report.eqs").string() << "\n";
      } else {
        const int bins = bins_override.value_or(eval.bins);
        const auto summary = summarize_equivariance(eval_grids(ckpt.params, samples), bins);
        write_file(dir / "eqscore.eqs", format_eqscore(ckpt.config, summary));
        out << "combined mean " << fixed(summary.combined.mean) << " std " << fixed(summary.combined.std) << "\n";
        out << "wrote " << (dir / "eqscore.eqs").string() << "\n";
      }
      return 0;
    }

    if (bench->parsed()) {
      const std::string text = read_file(input);
      const std::vector<Record> records = blank_document(text) ? std::vector<Record>{} : parse_document(text, "annotations");
      FilterStats stats;
      Document manifest("manifest");
      manifest.add(Record("meta")
                       .add("command", "benchbuild")
                       .add("source", source)
                       .add("input", std::filesystem::path(input).filename().string())
                       .add("seed", "none"));
      long emitted = 0;
      if (source == "youcook2") {
        const auto faces = parse_face_frames(records);
        const auto keep = faces ? reject_listed_frames(*faces) : pass_all_frames();
        for (const auto& [frame, caption] : youcook2_select(parse_youcook2_segments(records), keep, &stats)) {
          manifest.add(Record("item")
                           .add("source", source)
                           .add("frame", std::to_string(frame))
                           .add("caption", caption)
                           .add("trace", "youcook2:middle_frame,youcook2:frame_filter"));
          ++emitted;
        }
      } else {
        const auto pairs = source == "ag" ? ag_select_pairs(parse_ag_frames(records), &stats)
                                          : gebc_select(parse_gebc_boundaries(records), default_action_words(), &stats);
        for (const auto& p : pairs) {
          manifest.add(Record("pair")
                           .add("source", p.source)
                           .add("frame1", p.item1.frame)
                           .add("caption1", p.item1.caption)
                           .add("frame2", p.item2.frame)
                           .add("caption2", p.item2.caption)
                           .add("trace", join(p.filter_trace)));
          ++emitted;
        }
      }
      std::set<std::string> rules;
      for (const auto& [k, v] : stats.kept) rules.insert(k);
      for (const auto& [k, v] : stats.dropped) rules.insert(k);
      for (const auto& rule : rules) {
        manifest.add(Record("rule")
                         .add("name", rule)
                         .add("kept", stats.kept.contains(rule) ? stats.kept.at(rule) : 0L)
                         .add("dropped", stats.dropped.contains(rule) ? stats.dropped.at(rule) : 0L));
      }
      const auto path = std::filesystem::path(bench_out) / "manifest.eqs";
      write_file(path, manifest.str());
      out << "emitted " << emitted << " " << (source == "youcook2" ? "items" : "pairs") << "\n"
          << stats_lines(stats) << "wrote " << path.string() << "\n";
      return 0;
    }
  } catch (const NonFiniteLossError& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace eqsim
