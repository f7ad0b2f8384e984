#include "nfer/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "nfer/checkpoint.hpp"
#include "nfer/core.hpp"
#include "nfer/data.hpp"
#include "nfer/eval.hpp"
#include "nfer/noise.hpp"
#include "nfer/trainer.hpp"

namespace nfer::cli {

namespace fs = std::filesystem;

namespace {

// Fails unless `dir` is absent or empty; with `force` the directory is cleared.
void prepare_output_dir(const fs::path& dir, bool force) {
  if (dir.empty()) throw ConfigError("an output directory is required (--out)");
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw ConfigError("output directory " + dir.string() + " already exists; pass --force to overwrite");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

using KeyValues = std::map<std::string, std::string>;

KeyValues read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing " + path.string());
  KeyValues kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::string write_key_values(const KeyValues& kv) {
  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
  return os.str();
}

struct DataPaths {
  fs::path train;
  std::optional<fs::path> test;
};

// A directory holds train.csv (and optionally test.csv); a file is the train manifest.
DataPaths resolve_data(const fs::path& p, const std::string& test_override) {
  DataPaths d;
  if (fs::is_directory(p)) {
    d.train = p / "train.csv";
    if (fs::exists(p / "test.csv")) d.test = p / "test.csv";
  } else {
    d.train = p;
  }
  if (!test_override.empty()) d.test = test_override;
  if (!fs::exists(d.train)) throw DataError("training manifest not found: " + d.train.string());
  d.train = fs::absolute(d.train);
  if (d.test) d.test = fs::absolute(*d.test);
  return d;
}

struct NoiseOptions {
  std::string spec;  // "" = none
  std::string map;
};

struct PreparedData {
  data::Dataset train;
  std::optional<data::Dataset> test;
  std::optional<noise::NoiseLedger> ledger;
};

PreparedData prepare_data(const DataPaths& paths, const NoiseOptions& nopt, std::uint64_t seed) {
  PreparedData pd;
  pd.train = data::load_manifest(paths.train).data;
  if (paths.test) pd.test = data::load_manifest(*paths.test).data;
  if (!nopt.spec.empty() && nopt.spec != "none") {
    auto spec = noise::NoiseSpec::parse(nopt.spec);
    spec.seed = seed;
    if (!nopt.map.empty()) spec.flip_map = noise::parse_flip_map(nopt.map, pd.train.num_classes);
    auto noisy = noise::inject(pd.train, spec);
    pd.train = std::move(noisy.dataset);
    pd.ledger = std::move(noisy.ledger);
  }
  return pd;
}

fs::path latest_checkpoint(const fs::path& run) {
  int best = -1;
  fs::path found;
  if (!fs::is_directory(run)) throw DataError("run directory not found: " + run.string());
  for (const auto& e : fs::directory_iterator(run)) {
    const auto name = e.path().filename().string();
    if (name.rfind("ckpt-", 0) != 0) continue;
    try {
      const int k = std::stoi(name.substr(5));
      if (k > best) {
        best = k;
        found = e.path();
      }
    } catch (const std::exception&) {
    }
  }
  if (best < 0) throw DataError("run " + run.string() + " has no checkpoint (incomplete run?)");
  return found;
}

struct RunSummary {
  std::string name;
  std::string noise;
  AblationFlags ablation;
  double accuracy = 0.0;
};

std::string results_table(const std::vector<RunSummary>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(28) << "run" << std::setw(18) << "noise" << " LD  LM  EL  PL  accuracy(%)\n";
  auto mark = [](bool b) { return b ? " x  " : " -  "; };
  for (const auto& r : rows) {
    os << std::left << std::setw(28) << r.name << std::setw(18) << (r.noise.empty() ? "none" : r.noise)
       << mark(r.ablation.use_ld) << mark(r.ablation.use_lm_in_lde) << mark(r.ablation.use_el)
       << mark(r.ablation.use_pseudo_labels) << std::fixed << std::setprecision(2) << 100.0 * r.accuracy << '\n';
  }
  return os.str();
}

struct TrainInvocation {
  RunConfig config;
  DataPaths data;
  NoiseOptions noise;
  fs::path out;
  std::optional<fs::path> resume;
};

double run_training(const TrainInvocation& inv, std::ostream& out, bool verbose) {
  const PreparedData pd = prepare_data(inv.data, inv.noise, inv.config.hyper.seed);
  KeyValues meta;
  meta["train_data"] = inv.data.train.string();
  meta["test_data"] = inv.data.test ? inv.data.test->string() : "";
  meta["noise"] = inv.noise.spec;
  meta["noise_map"] = inv.noise.map;
  meta["ablation"] = inv.config.ablation.name();
  write_text(inv.out / "run.meta", write_key_values(meta));
  if (pd.ledger) noise::save_ledger(inv.out / "ledger.csv", *pd.ledger);
  trainer::FitOptions opt;
  opt.output_dir = inv.out;
  opt.resume_from = inv.resume;
  opt.ledger = pd.ledger ? &*pd.ledger : nullptr;
  if (verbose) {
    opt.on_epoch = [&out](const trainer::EpochMetrics& m) {
      out << "epoch " << m.epoch << " loss " << m.mean_loss.total << " train_acc " << m.train_accuracy;
      if (m.test_accuracy) out << " test_acc " << *m.test_accuracy;
      out << '\n';
    };
  }
  const auto res = trainer::fit(inv.config, pd.train, pd.test ? &*pd.test : nullptr, opt);
  out << "final accuracy " << res.final_report.overall_accuracy << '\n';
  return res.final_report.overall_accuracy;
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  // Reuse the config parser so names, types and ranges stay in one place.
  std::string text = serialize_config(cfg);
  text += key + " = " + value + "\n";
  cfg = parse_config(text);
}

int report_runs(const std::vector<fs::path>& runs, const fs::path& compare_out, std::ostream& out) {
  std::vector<RunSummary> rows;
  for (const auto& run : runs) {
    const auto ckpt_path = latest_checkpoint(run);
    const auto meta = read_key_values(run / "run.meta");
    const Checkpoint ckpt = read_checkpoint(ckpt_path);
    const auto model = model_from_checkpoint(ckpt);
    if (ckpt.epochs_completed < ckpt.config.hyper.epochs)
      throw DataError("run " + run.string() + " is incomplete (" + std::to_string(ckpt.epochs_completed) + "/" +
                      std::to_string(ckpt.config.hyper.epochs) + " epochs)");
    data::Dataset train = data::load_manifest(meta.at("train_data")).data;
    std::optional<data::Dataset> test;
    if (!meta.at("test_data").empty()) test = data::load_manifest(meta.at("test_data")).data;
    std::optional<noise::NoiseLedger> ledger;
    if (fs::exists(run / "ledger.csv")) {
      ledger = noise::load_ledger(run / "ledger.csv");
      for (auto& r : train.records) r.label = ledger->at(r.id).injected;
    }
    lde::TargetStore store;
    store.assign(ckpt.store_ids, ckpt.store_targets, ckpt.store_epoch);
    const auto rep = trainer::evaluate_run(model, train, test ? &*test : nullptr, ledger ? &*ledger : nullptr, &store);
    const fs::path dir = run / "report";
    rep.write(dir);
    if (!ledger) out << "notice: no noise ledger for " << run.string() << "; CE histogram section skipped\n";
    eval::export_embeddings(model, train, ledger ? &*ledger : nullptr, dir / "embeddings.csv");
    store.export_csv(dir / "targets.csv");
    write_text(dir / "config.snapshot", serialize_config(ckpt.config));
    RunSummary s{run.filename().string(), meta.at("noise"), ckpt.config.ablation, rep.overall_accuracy};
    if (s.name.empty()) s.name = run.parent_path().filename().string();
    write_text(dir / "table.txt", results_table({s}));
    rows.push_back(s);
    out << rep.summary();
  }
  const std::string table = results_table(rows);
  out << table;
  if (!compare_out.empty()) write_text(compare_out, table);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Landmark-aware noise-robust classifier training"};
  app.require_subcommand(1);

  // gen-data
  data::SyntheticSpec gspec;
  fs::path gen_out;
  bool gen_force = false;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dual-view dataset");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--classes", gspec.num_classes, "Number of classes");
  gen->add_option("--per-class", gspec.samples_per_class, "Samples per class (80/20 train/test)");
  gen->add_option("--input-dim", gspec.input_dim, "Input vector width");
  gen->add_option("--landmarks", gspec.landmark_count, "Landmark points per sample");
  gen->add_option("--separation", gspec.class_separation, "Distance between class means");
  gen->add_option("--noise-std", gspec.view_noise_std, "Per-view Gaussian noise");
  gen->add_option("--seed", gspec.seed, "RNG seed");
  gen->add_flag("--force", gen_force, "Overwrite the output directory");

  // inject-noise
  fs::path inj_data, inj_out;
  std::string inj_kind = "symmetric", inj_map;
  double inj_ratio = 0.0;
  std::uint64_t inj_seed = 0;
  bool inj_force = false;
  auto* inj = app.add_subcommand("inject-noise", "Flip training labels and write the noise ledger");
  inj->add_option("--data", inj_data, "Training manifest or dataset directory")->required();
  inj->add_option("--out", inj_out, "Output directory")->required();
  inj->add_option("--kind", inj_kind, "symmetric or asymmetric");
  inj->add_option("--ratio", inj_ratio, "Fraction of samples to flip");
  inj->add_option("--seed", inj_seed, "RNG seed");
  inj->add_option("--map", inj_map, "Asymmetric flip map, e.g. 0:1,1:0,2:0");
  inj->add_flag("--force", inj_force, "Overwrite the output directory");

  // train
  fs::path tr_config, tr_data, tr_out, tr_resume;
  std::string tr_test, tr_noise, tr_map, tr_ablation;
  std::optional<std::uint64_t> tr_seed;
  std::optional<int> tr_epochs;
  bool tr_force = false, tr_quiet = false;
  auto* tr = app.add_subcommand("train", "Train a model, optionally under injected label noise");
  tr->add_option("--config", tr_config, "key = value config file");
  tr->add_option("--data", tr_data, "Dataset directory (train.csv/test.csv) or training manifest")->required();
  tr->add_option("--test", tr_test, "Test manifest (overrides the directory's test.csv)");
  tr->add_option("--noise", tr_noise, "kind:ratio, e.g. symmetric:0.3");
  tr->add_option("--noise-map", tr_map, "Flip map for asymmetric noise");
  tr->add_option("--ablation", tr_ablation, "baseline, full, or a list like ld+lm+el");
  tr->add_option("--seed", tr_seed, "Seed for noise, initialization and sampling");
  tr->add_option("--epochs", tr_epochs, "Override the configured epoch count");
  tr->add_option("--out", tr_out, "Run directory")->required();
  tr->add_option("--resume", tr_resume, "Checkpoint to resume from");
  tr->add_flag("--force", tr_force, "Overwrite the run directory");
  tr->add_flag("--quiet", tr_quiet, "No per-epoch progress");

  // evaluate
  fs::path ev_ckpt, ev_data, ev_out;
  auto* ev = app.add_subcommand("evaluate", "Accuracy and confusion of a checkpoint on a dataset");
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--data", ev_data, "Manifest to evaluate on")->required();
  ev->add_option("--out", ev_out, "Directory for summary.txt / confusion.csv");

  // report
  std::vector<fs::path> rep_runs;
  fs::path rep_compare;
  auto* rep = app.add_subcommand("report", "Write report artifacts for one or more finished runs");
  rep->add_option("runs", rep_runs, "Run directories")->required();
  rep->add_option("--compare-out", rep_compare, "Write the side-by-side table here");

  // sweep
  std::vector<std::string> sw_grid;
  fs::path sw_config, sw_data, sw_out;
  std::string sw_test, sw_noise = "symmetric:0.3", sw_map, sw_ablation = "full";
  std::uint64_t sw_seed = 0;
  std::optional<int> sw_epochs;
  bool sw_force = false, sw_parallel = false;
  auto* sw = app.add_subcommand("sweep", "One-at-a-time parameter sweep");
  sw->add_option("--grid", sw_grid, "param:v1,v2,... (repeatable); param may be any config key or 'noise'");
  sw->add_option("--config", sw_config, "Base config file");
  sw->add_option("--data", sw_data, "Dataset directory or training manifest")->required();
  sw->add_option("--test", sw_test, "Test manifest");
  sw->add_option("--noise", sw_noise, "Base noise spec");
  sw->add_option("--noise-map", sw_map, "Flip map for asymmetric noise");
  sw->add_option("--ablation", sw_ablation, "Ablation preset for every run");
  sw->add_option("--seed", sw_seed, "Seed for every run");
  sw->add_option("--epochs", sw_epochs, "Override the configured epoch count");
  sw->add_option("--out", sw_out, "Sweep directory")->required();
  sw->add_flag("--force", sw_force, "Overwrite the sweep directory");
  sw->add_flag("--parallel", sw_parallel, "Run grid points concurrently");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    if (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front(); sub && e.get_exit_code() == 0) {
      out << sub->help();
      return kOk;
    }
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (gen->parsed()) {
      gspec.validate(0);
      prepare_output_dir(gen_out, gen_force);
      const auto ds = data::generate_synthetic(gspec);
      data::save_manifest(gen_out / "train.csv", ds.train, data::Split::train);
      data::save_manifest(gen_out / "test.csv", ds.test, data::Split::test);
      KeyValues kv{{"classes", std::to_string(gspec.num_classes)},
                   {"per_class", std::to_string(gspec.samples_per_class)},
                   {"input_dim", std::to_string(gspec.input_dim)},
                   {"landmarks", std::to_string(gspec.landmark_count)},
                   {"separation", format_double(gspec.class_separation)},
                   {"noise_std", format_double(gspec.view_noise_std)},
                   {"seed", std::to_string(gspec.seed)}};
      write_text(gen_out / "config.snapshot", write_key_values(kv));
      out << "wrote " << ds.train.size() << " train / " << ds.test.size() << " test samples to " << gen_out.string() << '\n';
      return kOk;
    }

    if (inj->parsed()) {
      const auto paths = resolve_data(inj_data, "");
      auto train = data::load_manifest(paths.train).data;
      noise::NoiseSpec spec = noise::NoiseSpec::parse(inj_kind + ":" + format_double(inj_ratio));
      spec.seed = inj_seed;
      if (!inj_map.empty()) spec.flip_map = noise::parse_flip_map(inj_map, train.num_classes);
      const auto noisy = noise::inject(train, spec);
      prepare_output_dir(inj_out, inj_force);
      data::save_manifest(inj_out / "train.csv", noisy.dataset, data::Split::train);
      noise::save_ledger(inj_out / "ledger.csv", noisy.ledger);
      KeyValues kv{{"source", paths.train.string()}, {"kind", inj_kind}, {"ratio", format_double(inj_ratio)},
                   {"seed", std::to_string(inj_seed)}, {"map", inj_map}};
      write_text(inj_out / "config.snapshot", write_key_values(kv));
      out << "flipped " << noisy.ledger.flipped_count() << " of " << noisy.ledger.entries.size() << " labels\n";
      return kOk;
    }

    if (tr->parsed()) {
      TrainInvocation inv;
      inv.config = tr_config.empty() ? parse_config("") : load_run_config(tr_config);
      if (tr_seed) inv.config.hyper.seed = *tr_seed;
      if (tr_epochs) apply_override(inv.config, "epochs", std::to_string(*tr_epochs));
      if (!tr_ablation.empty()) inv.config.ablation = AblationFlags::parse(tr_ablation);
      inv.data = resolve_data(tr_data, tr_test);
      inv.noise = {tr_noise, tr_map};
      if (!tr_resume.empty()) {
        inv.resume = fs::absolute(tr_resume);
        fs::create_directories(tr_out);
      } else {
        prepare_output_dir(tr_out, tr_force);
      }
      inv.out = tr_out;
      run_training(inv, out, !tr_quiet);
      return kOk;
    }

    if (ev->parsed()) {
      const Checkpoint ckpt = read_checkpoint(ev_ckpt);
      const auto model = model_from_checkpoint(ckpt);
      const auto ds = data::load_manifest(ev_data).data;
      const auto rep = trainer::evaluate_run(model, ds, nullptr, nullptr, nullptr);
      out << rep.summary();
      if (!ev_out.empty()) {
        rep.write(ev_out);
        write_text(ev_out / "config.snapshot", serialize_config(ckpt.config));
      }
      return kOk;
    }

    if (rep->parsed()) return report_runs(rep_runs, rep_compare, out);

    if (sw->parsed()) {
      if (sw_grid.empty()) throw ConfigError("sweep: empty grid");
      RunConfig base = sw_config.empty() ? parse_config("") : load_run_config(sw_config);
      base.hyper.seed = sw_seed;
      if (sw_epochs) apply_override(base, "epochs", std::to_string(*sw_epochs));
      base.ablation = AblationFlags::parse(sw_ablation);
      const auto paths = resolve_data(sw_data, sw_test);
      std::vector<std::pair<std::string, std::string>> points;
      for (const auto& g : sw_grid) {
        const auto colon = g.find(':');
        if (colon == std::string::npos || colon == 0) throw ConfigError("sweep: grid entry '" + g + "' is not param:values");
        const std::string param = g.substr(0, colon);
        std::stringstream ss(g.substr(colon + 1));
        std::string v;
        bool any = false;
        while (std::getline(ss, v, ',')) {
          if (v.empty()) continue;
          points.emplace_back(param, v);
          any = true;
        }
        if (!any) throw ConfigError("sweep: grid entry '" + g + "' lists no values");
      }
      std::vector<TrainInvocation> invs;
      for (const auto& [param, value] : points) {
        TrainInvocation inv;
        inv.config = base;
        inv.data = paths;
        inv.noise = {sw_noise, sw_map};
        if (param == "noise") {
          const auto colon = sw_noise.find(':');
          inv.noise.spec = (colon == std::string::npos ? std::string("symmetric") : sw_noise.substr(0, colon)) + ":" + value;
          noise::NoiseSpec::parse(inv.noise.spec);
        } else {
          apply_override(inv.config, param, value);
        }
        invs.push_back(std::move(inv));
      }
      prepare_output_dir(sw_out, sw_force);
      write_text(sw_out / "config.snapshot", serialize_config(base));
      std::vector<double> acc(invs.size());
      std::vector<std::string> errors(invs.size());
      auto run_one = [&](std::size_t i) {
        invs[i].out = sw_out / (points[i].first + "-" + points[i].second);
        fs::create_directories(invs[i].out);
        std::ostringstream sink;
        try {
          acc[i] = run_training(invs[i], sink, false);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      };
      if (sw_parallel) {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < invs.size(); ++i) pool.emplace_back(run_one, i);
        for (auto& t : pool) t.join();
      } else {
        for (std::size_t i = 0; i < invs.size(); ++i) run_one(i);
      }
      for (std::size_t i = 0; i < invs.size(); ++i)
        if (!errors[i].empty()) throw NumericError("sweep point " + points[i].first + "=" + points[i].second + ": " + errors[i]);
      std::ostringstream csv;
      csv << "param,value,accuracy\n";
      for (std::size_t i = 0; i < points.size(); ++i)
        csv << points[i].first << ',' << points[i].second << ',' << format_double(acc[i]) << '\n';
      write_text(sw_out / "sweep.csv", csv.str());
      out << csv.str();
      return kOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::out_of_range& e) {
    err << "data error: malformed run metadata (" << e.what() << ")\n";
    return kDataError;
  }
  return kConfigError;
}

}  // namespace nfer::cli
