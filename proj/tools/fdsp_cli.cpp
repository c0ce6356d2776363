/*
 * Copyright 2026 The FDSP Lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// fdsp: dataset generation, federated training, evaluation, sweeps and report
// merging. Every file it writes is a pure function of the config and seeds.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <array>
#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fdsp/fdsp.hpp"

namespace fs = std::filesystem;
using namespace fdsp;

namespace {

// Settings shared by train, eval and sweep. Precedence, lowest first: profile,
// --config file, FDSPG_OUT, --set pairs, dedicated flags.
struct ConfigFlags {
  std::string config_file;
  std::vector<std::string> sets;
  bool paper_profile = false;
  bool desk_profile = false;
  std::optional<std::uint64_t> seed;
  std::string dataset, prompt_mode, target_domain, out;
  std::optional<double> alpha, epochs_per_round;
  std::optional<std::size_t> epochs;
  std::size_t parallel = 1;

  void attach(CLI::App& app) {
    app.add_option("-c,--config", config_file, "key = value config file")->check(CLI::ExistingFile);
    app.add_option("--set", sets, "override one key, e.g. --set tau=0.05 (repeatable)");
    auto* paper = app.add_flag("--paper-profile", paper_profile, "reference schedule: 100 epochs, lr 1e-5 / 1e-4");
    app.add_flag("--desk-profile", desk_profile, "optimizer settings tuned for the synthetic presets")
        ->excludes(paper);
    app.add_option("--seed", seed, "data, model and noise seed");
    app.add_option("--dataset", dataset, "dataset directory or manifest (default: synthetic preset)");
    app.add_option("--prompt-mode", prompt_mode, "dsp | csp | hdp | wgm");
    app.add_option("--target-domain", target_domain, "held-out domain name");
    app.add_option("--alpha", alpha, "momentum coefficient");
    app.add_option("--epochs", epochs, "epochs of both stages");
    app.add_option("--epochs-per-round", epochs_per_round, "local epochs between aggregations (multiple of 0.5)");
    app.add_option("-o,--out", out, "output directory");
    app.add_option("--parallel", parallel, "worker threads")->check(CLI::PositiveNumber);
  }

  [[nodiscard]] ExperimentConfig resolve() const {
    ExperimentConfig cfg = paper_profile  ? ExperimentConfig::paper_profile()
                           : desk_profile ? ExperimentConfig::desk_profile()
                                          : ExperimentConfig{};
    if (!config_file.empty()) cfg = load_config(config_file, cfg);
    if (const char* env = std::getenv("FDSPG_OUT"); env != nullptr && *env != '\0') cfg.output_dir = env;
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw config_error("--set expects key=value, got '" + kv + "'");
      cfg.set(detail::trim(std::string_view(kv).substr(0, eq)), std::string_view(kv).substr(eq + 1));
    }
    if (seed) cfg.set_all_seeds(*seed);
    if (!dataset.empty()) cfg.dataset_path = dataset;
    if (!prompt_mode.empty()) cfg.mode = parse_prompt_mode(prompt_mode);
    if (!target_domain.empty()) cfg.target_domain = target_domain;
    if (alpha) cfg.alpha = *alpha;
    if (epochs) cfg.epochs = cfg.gan_epochs = *epochs;
    if (epochs_per_round) cfg.epochs_per_round = *epochs_per_round;
    if (!out.empty()) cfg.output_dir = out;
    cfg.validate();
    return cfg;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out.flush()) throw io_error("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create " + dir.string() + ": " + ec.message());
}

void write_report(const EvalReport& r, const fs::path& dir, const std::string& stem) {
  write_text(dir / (stem + ".csv"), r.to_csv());
  write_text(dir / (stem + ".json"), r.to_json().dump(2) + "\n");
  std::printf("%s: mean accuracy %.4f, macro-F1 %.4f over %zu domain(s) -> %s\n", r.protocol.c_str(),
              r.mean_accuracy(), r.mean_macro_f1(), r.rows.size(), (dir / (stem + ".csv")).c_str());
}

// ---- gen-data ---------------------------------------------------------------

struct GenDataCmd {
  data::SyntheticSpec spec;
  std::string out;
  bool force = false;

  void attach(CLI::App& app) {
    app.add_option("--classes", spec.classes, "classes K")->check(CLI::Range(2, 65535));
    app.add_option("--domains", spec.domains, "domains")->check(CLI::Range(2, 4096));
    app.add_option("--shots", spec.shots, "samples per (domain, class)")->check(CLI::PositiveNumber);
    app.add_option("--feature-dim", spec.feature_dim, "raw feature width")->check(CLI::PositiveNumber);
    app.add_option("--shift", spec.shift_strength, "domain shift strength in [0, 1]");
    app.add_option("--family", spec.family, "class-name family: A or B");
    app.add_option("--seed", spec.seed, "generator seed");
    app.add_option("-o,--out", out, "dataset directory (default: $FDSPG_OUT/data or out/data)");
    app.add_flag("--force", force, "overwrite an existing dataset");
  }

  int run() const {
    fs::path dir = out;
    if (dir.empty()) {
      const char* env = std::getenv("FDSPG_OUT");
      dir = fs::path(env != nullptr && *env != '\0' ? env : ExperimentConfig{}.output_dir) / "data";
    }
    if (fs::exists(dir / "manifest.json") && !force) {
      throw io_error(dir.string() + " already holds a dataset (use --force to overwrite)");
    }
    const auto ds = data::gen_dataset(spec);
    ensure_dir(dir);
    data::save_dataset(ds, dir);
    std::printf("wrote %zu samples (%zu classes x %zu domains x %zu shots) to %s\n", ds.size(), ds.num_classes(),
                ds.domains.size(), spec.shots, dir.c_str());
    return 0;
  }
};

// ---- train ------------------------------------------------------------------

nlohmann::ordered_json round_record(const RoundEvent& e) {
  nlohmann::ordered_json j;
  j["stage"] = e.stage;
  j["round"] = e.round;
  auto& clients = j["clients"] = nlohmann::ordered_json::array();
  for (const auto& c : e.clients) {
    nlohmann::ordered_json cj{{"client", c.client}, {"steps", c.steps}};
    if (e.stage == 1) {
      cj["loss"] = c.loss;
    } else {
      cj["d_loss"] = c.d_loss;
      cj["g_loss"] = c.g_loss;
    }
    clients.push_back(std::move(cj));
  }
  j["prompt_norm"] = e.prompt_norm;
  j["gan_norm"] = e.gan_norm;
  if (e.record != nullptr) {
    j["momentum_tensors"] = e.record->momentum_names.size();
    j["plain_tensors"] = e.record->plain_names.size();
  }
  return j;
}

struct TrainCmd {
  ConfigFlags flags;
  bool no_checkpoints = false;

  void attach(CLI::App& app) {
    flags.attach(app);
    app.add_flag("--no-round-checkpoints", no_checkpoints, "write only the final model");
  }

  int run() const {
    const auto cfg = flags.resolve();
    const fs::path out = cfg.output_dir;
    ensure_dir(out / "checkpoints");
    const auto ds = make_dataset(cfg);
    const auto rt = Runtime::make(cfg, ds);

    std::ofstream log(out / "train_log.jsonl", std::ios::binary | std::ios::trunc);
    if (!log) throw io_error("cannot open " + (out / "train_log.jsonl").string());
    RunOptions opts;
    opts.threads = flags.parallel;
    opts.hooks.on_round = [&](const RoundEvent& e) {
      log << round_record(e).dump() << "\n";
      log.flush();
      if (!no_checkpoints && e.distributed != nullptr) {
        fed::ParamMessage msg;
        msg.sender = TrainedModel::server_id;
        msg.round = e.round;
        for (const auto& [name, t] : *e.distributed) msg.entries.push_back({name, t});
        msg.sort_entries();
        char name[48];
        std::snprintf(name, sizeof name, "stage%d_round_%04u.fdsp", e.stage, e.round);
        fed::write_message(out / "checkpoints" / name, msg);
      }
    };
    const auto model = train_model(cfg, ds, rt, opts);

    fed::write_message(out / "model.fdsp", model.checkpoint(std::uint32_t(model.stage1_rounds + model.stage2_rounds)));
    write_text(out / "config.cfg", cfg.canonical());
    nlohmann::ordered_json done{{"event", "done"},
                                {"mode", std::string(to_string(cfg.mode))},
                                {"stage1_rounds", model.stage1_rounds},
                                {"stage2_rounds", model.stage2_rounds},
                                {"prompt_updates", model.prompt_updates},
                                {"config_hash", cfg.hash()}};
    log << done.dump() << "\n";
    if (!log.flush()) throw io_error("failed writing the training log");
    std::printf("trained %s: %zu + %zu rounds, %zu prompt updates -> %s\n", std::string(to_string(cfg.mode)).c_str(),
                model.stage1_rounds, model.stage2_rounds, model.prompt_updates, (out / "model.fdsp").c_str());
    return 0;
  }
};

// ---- eval -------------------------------------------------------------------

struct EvalCmd {
  ConfigFlags flags;
  std::string protocol = "holdout";
  std::string checkpoint;
  std::string target;

  void attach(CLI::App& app) {
    flags.attach(app);
    app.add_option("--protocol", protocol, "holdout | lodo | cross-dataset")
        ->check(CLI::IsMember({"holdout", "lodo", "cross-dataset"}));
    app.add_option("--checkpoint", checkpoint, "trained model (default: <out>/model.fdsp)");
    app.add_option("--target", target, "cross-dataset: target dataset directory or manifest");
  }

  int run() const {
    auto cfg = flags.resolve();
    const fs::path out = cfg.output_dir;
    const fs::path ckpt = checkpoint.empty() ? out / "model.fdsp" : fs::path(checkpoint);
    // without --config, reuse the settings the checkpoint was trained with
    if (protocol != "lodo" && flags.config_file.empty() && fs::exists(ckpt.parent_path() / "config.cfg")) {
      auto with_saved = flags;
      with_saved.config_file = (ckpt.parent_path() / "config.cfg").string();
      cfg = with_saved.resolve();
      if (flags.out.empty()) cfg.output_dir = out.string();
    }
    ensure_dir(out);
    RunOptions opts;
    opts.threads = flags.parallel;

    if (protocol == "lodo") {
      write_report(leave_one_domain_out(cfg, opts), out, "lodo_report");
      return 0;
    }

    const auto ds = make_dataset(cfg);
    const auto rt = Runtime::make(cfg, ds);
    const auto model = TrainedModel::from_checkpoint(fed::read_message(ckpt), cfg);

    if (protocol == "cross-dataset") {
      if (target.empty()) throw config_error("--protocol cross-dataset needs --target");
      const auto tgt = data::import_embeddings(data::detail::manifest_of(target));
      if (tgt.feature_dim != ds.feature_dim) {
        throw dimension_error("source feature_dim " + std::to_string(ds.feature_dim) + " differs from target " +
                              std::to_string(tgt.feature_dim));
      }
      write_report(evaluate_all(model, rt.rebind(tgt), tgt, cfg, "cross-dataset", opts.threads), out,
                   "cross-dataset_report");
      return 0;
    }

    auto report = make_report("holdout", cfg);
    if (!cfg.target_domain.empty()) {
      report.rows.push_back(evaluate(model, rt, ds, ds.domain_by_name(cfg.target_domain), cfg, opts.threads));
    } else {
      report = evaluate_all(model, rt, ds, cfg, "holdout", opts.threads);
    }
    write_report(report, out, "holdout_report");
    return 0;
  }
};

// ---- sweep ------------------------------------------------------------------

const std::map<std::string, std::string>& sweep_axes() {
  static const std::map<std::string, std::string> axes = {
      {"alpha", "alpha"},       {"epochs-per-round", "epochs_per_round"}, {"clients", "clients"},
      {"shots", "data.shots"},  {"overlap", "overlap"},                   {"prompt-mode", "prompt_mode"},
      {"tau", "tau"},           {"momentum-rule", "momentum_rule"},
  };
  return axes;
}

struct SweepCmd {
  ConfigFlags flags;
  std::string axis;
  std::vector<std::string> values;
  std::vector<std::uint64_t> seeds;

  void attach(CLI::App& app) {
    flags.attach(app);
    std::vector<std::string> names;
    for (const auto& [k, v] : sweep_axes()) names.push_back(k);
    app.add_option("--axis", axis, "swept setting")->required()->check(CLI::IsMember(names));
    app.add_option("--values", values, "comma-separated axis values")->required()->delimiter(',');
    app.add_option("--seeds", seeds, "comma-separated seeds (default: the config's)")->delimiter(',');
  }

  struct Job {
    std::string value;
    ExperimentConfig cfg;
  };

  static std::string rows_of(const std::string& value, const EvalReport& r) {
    std::string out;
    char buf[64];
    for (const auto& row : r.rows) {
      std::snprintf(buf, sizeof buf, ",%.6f,%.6f,", row.accuracy, row.macro_f1);
      out += value + "," + row.target_domain + buf + std::to_string(r.seed) + "," + r.config_hash + "\n";
    }
    return out;
  }

  int run() const {
    const auto base = flags.resolve();
    const std::string key = sweep_axes().at(axis);
    std::vector<Job> jobs;
    const auto run_seeds = seeds.empty() ? std::vector<std::uint64_t>{base.model_seed} : seeds;
    for (const auto& v : values) {
      for (auto s : run_seeds) {
        auto cfg = base;
        cfg.set(key, v);
        if (!seeds.empty()) cfg.set_all_seeds(s);
        cfg.validate();  // reject a bad value before any run starts
        jobs.push_back({v, std::move(cfg)});
      }
    }

    const fs::path path = fs::path(base.output_dir) / ("sweep_" + axis + ".csv");
    ensure_dir(base.output_dir);
    std::ofstream csv(path, std::ios::binary | std::ios::trunc);
    if (!csv) throw io_error("cannot open " + path.string());
    csv << "axis_value,target_domain,accuracy,macro_f1,seed,config_hash\n";
    csv.flush();

    // Workers take jobs in order; the writer appends each finished job as soon as
    // every earlier one is on disk, so the file never depends on scheduling.
    std::vector<std::optional<std::string>> done(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    std::mutex mu;
    std::condition_variable cv;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
        std::string rows;
        try {
          rows = rows_of(jobs[i].value, leave_one_domain_out(jobs[i].cfg));
        } catch (...) {
          errors[i] = std::current_exception();
        }
        std::lock_guard lock(mu);
        done[i] = std::move(rows);
        cv.notify_all();
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(flags.parallel, jobs.size()); ++t) pool.emplace_back(worker);

    int status = 0;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      std::unique_lock lock(mu);
      cv.wait(lock, [&] { return done[i].has_value(); });
      lock.unlock();
      if (errors[i]) {
        try {
          std::rethrow_exception(errors[i]);
        } catch (const std::exception& e) {
          std::fprintf(stderr, "fdsp sweep: %s=%s failed: %s\n", axis.c_str(), jobs[i].value.c_str(), e.what());
        }
        status = 1;
        continue;
      }
      csv << *done[i];
      csv.flush();
      std::printf("%s=%s seed %llu done (%zu/%zu)\n", axis.c_str(), jobs[i].value.c_str(),
                  static_cast<unsigned long long>(jobs[i].cfg.model_seed), i + 1, jobs.size());
      std::fflush(stdout);
    }
    for (auto& t : pool) t.join();
    if (!csv) throw io_error("failed writing " + path.string());
    std::printf("-> %s\n", path.c_str());
    return status;
  }
};

// ---- report -----------------------------------------------------------------

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct ReportCmd {
  std::vector<std::string> inputs;
  std::string output;

  void attach(CLI::App& app) {
    app.add_option("inputs", inputs, "report or sweep CSVs with identical headers")->required()
        ->check(CLI::ExistingFile);
    app.add_option("-o,--output", output, "merged CSV (default: <FDSPG_OUT or out>/merged.csv)");
  }

  int run() const {
    std::string header, body;
    for (const auto& in : inputs) {
      std::ifstream f(in, std::ios::binary);
      if (!f) throw io_error("cannot open " + in);
      std::string line;
      if (!std::getline(f, line)) throw schema_error(in + " is empty");
      if (header.empty()) header = line;
      if (line != header) throw schema_error(in + " has header '" + line + "', expected '" + header + "'");
      while (std::getline(f, line))
        if (!line.empty()) body += line + "\n";
    }
    const auto cols = split_csv(header);
    const auto find = [&](const std::string& name) -> std::size_t {
      for (std::size_t i = 0; i < cols.size(); ++i)
        if (cols[i] == name) return i;
      throw schema_error("merged CSVs lack a '" + name + "' column");
    };
    const std::size_t target = find("target_domain"), acc = find("accuracy"), f1 = find("macro_f1");

    fs::path path = output;
    if (path.empty()) {
      const char* env = std::getenv("FDSPG_OUT");
      path = fs::path(env != nullptr && *env != '\0' ? env : ExperimentConfig{}.output_dir) / "merged.csv";
    }
    write_text(path, header + "\n" + body);

    // Means per leading key (the columns before target_domain), in first-seen order.
    std::vector<std::string> order;
    std::map<std::string, std::array<double, 3>> sums;
    std::stringstream ss(body);
    for (std::string line; std::getline(ss, line);) {
      const auto cells = split_csv(line);
      if (cells.size() != cols.size()) throw schema_error("row has " + std::to_string(cells.size()) + " cells: " + line);
      std::string key;
      for (std::size_t i = 0; i < target; ++i) key += (i ? "," : "") + cells[i];
      auto [it, fresh] = sums.try_emplace(key, std::array<double, 3>{0, 0, 0});
      if (fresh) order.push_back(key);
      it->second[0] += std::stod(cells[acc]);
      it->second[1] += std::stod(cells[f1]);
      it->second[2] += 1;
    }
    std::string lead;
    for (std::size_t i = 0; i < target; ++i) lead += (i ? "," : "") + cols[i];
    std::printf("%-24s %10s %10s %6s\n", lead.c_str(), "accuracy", "macro_f1", "rows");
    for (const auto& k : order) {
      const auto& s = sums[k];
      std::printf("%-24s %10.4f %10.4f %6.0f\n", k.c_str(), s[0] / s[2], s[1] / s[2], s[2]);
    }
    std::printf("-> %s\n", path.c_str());
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated domain-specific soft prompts with a prompt generator"};
  app.require_subcommand(1);
  GenDataCmd gen;
  TrainCmd train;
  EvalCmd eval;
  SweepCmd sweep;
  ReportCmd report;
  gen.attach(*app.add_subcommand("gen-data", "write a synthetic multi-domain dataset"));
  train.attach(*app.add_subcommand("train", "run both federated stages and write checkpoints"));
  eval.attach(*app.add_subcommand("eval", "evaluate a checkpoint, or run leave-one-domain-out"));
  sweep.attach(*app.add_subcommand("sweep", "leave-one-domain-out over one axis of values"));
  report.attach(*app.add_subcommand("report", "merge report CSVs and print means"));
  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("gen-data")) return gen.run();
    if (app.got_subcommand("train")) return train.run();
    if (app.got_subcommand("eval")) return eval.run();
    if (app.got_subcommand("sweep")) return sweep.run();
    return report.run();
  } catch (const fdsp::error& e) {
    std::fprintf(stderr, "fdsp: %s\n", e.what());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fdsp: unexpected failure: %s\n", e.what());
  }
  return 1;
}
