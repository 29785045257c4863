#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ocsq/error.hpp"
#include "ocsq/harness.hpp"

using namespace ocsq;

namespace {

std::optional<int> parse_bits(const std::string& s, const char* flag) {
  if (s == "float") return std::nullopt;
  try {
    std::size_t used = 0;
    const int b = std::stoi(s, &used);
    if (used == s.size()) return b;
  } catch (const std::exception&) {
  }
  throw UsageError(std::string(flag) + " expects an integer or 'float', got '" + s + "'");
}

struct Flags {
  std::string model, data, wbits = "8", abits = "8", clip_w = "none", clip_a = "none", target = "none";
  double ratio = 0.0;
  bool qa = true;
  std::size_t profile_samples = 512;
  bool oracle = false;
  std::size_t oracle_batch = 1;
  std::string out, save_model, save_plan, name;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--model", f.model, "Model .qnt file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--data", f.data, "Dataset .qnt file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--wbits", f.wbits, "Weight bitwidth or 'float'")->capture_default_str();
  cmd->add_option("--abits", f.abits, "Activation bitwidth or 'float'")->capture_default_str();
  cmd->add_option("--clip-w", f.clip_w, "Weight clip method")
      ->check(CLI::IsMember({"none", "mse", "aciq", "kl"}))
      ->capture_default_str();
  cmd->add_option("--clip-a", f.clip_a, "Activation clip method")
      ->check(CLI::IsMember({"none", "mse", "aciq", "kl"}))
      ->capture_default_str();
  cmd->add_flag("--qa,!--no-qa", f.qa, "Quantization-aware splitting (default on)");
  cmd->add_option("--profile-samples", f.profile_samples, "Profiling samples")->capture_default_str();
  cmd->add_option("--out", f.out, "Write the CSV report here instead of stdout");
  cmd->add_option("--seed", f.seed, "Seed for the profiling subset")->capture_default_str();
  cmd->add_option("--name", f.name, "Model label in the report (default: file stem)");
}

RunConfig to_config(const Flags& f) {
  RunConfig c;
  c.model_path = f.model;
  c.data_path = f.data;
  c.wbits = parse_bits(f.wbits, "--wbits");
  c.abits = parse_bits(f.abits, "--abits");
  c.clip_w = parse_clip_method(f.clip_w);
  c.clip_a = parse_clip_method(f.clip_a);
  if (f.target != "none") c.ocs_target = parse_split_target(f.target);
  c.ocs_ratio = f.ratio;
  c.qa = f.qa;
  c.profile_samples = f.profile_samples;
  c.oracle = f.oracle;
  c.oracle_batch = f.oracle_batch;
  c.seed = f.seed;
  c.model_name = f.name;
  // Activation runs are reported by their activation settings.
  const bool acts = c.ocs_target == SplitTarget::activations ||
                    (!c.ocs_target && c.clip_w == ClipMethod::none && c.clip_a != ClipMethod::none);
  c.focus = acts ? Focus::activations : Focus::weights;
  if (!f.out.empty()) c.out = f.out;
  if (!f.save_model.empty()) c.save_model = f.save_model;
  if (!f.save_plan.empty()) c.save_plan = f.save_plan;
  return c;
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream os(out);
  if (!os) throw Error("cannot write '" + out + "'");
  os << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ocsq: post-training quantization with outlier channel splitting"};
  app.require_subcommand(1);

  Flags q;
  auto* quantize = app.add_subcommand("quantize", "Quantize, evaluate and report one configuration");
  add_common(quantize, q);
  quantize->add_option("--ocs-target", q.target, "Split target")
      ->check(CLI::IsMember({"weights", "acts", "none"}))
      ->capture_default_str();
  quantize->add_option("--ocs-ratio", q.ratio, "Expand ratio r")->capture_default_str();
  quantize->add_flag("--oracle", q.oracle, "Oracle activation OCS (per-batch channel choice)");
  quantize->add_option("--oracle-batch", q.oracle_batch, "Oracle batch size")->capture_default_str();
  quantize->add_option("--save-model", q.save_model, "Write the transformed model");
  quantize->add_option("--save-plan", q.save_plan, "Write the split plan JSON");

  Flags s;
  std::vector<int> bits{8, 7, 6, 5, 4};
  std::vector<std::string> clips{"none", "mse", "aciq", "kl"};
  std::vector<double> ratios{0.0, 0.01, 0.02, 0.05};
  std::string sweep_target = "weights";
  unsigned threads = 0;
  bool no_combined = false;
  auto* sweep = app.add_subcommand("sweep", "Run bits x clip x ratio and the OCS + best clip rows");
  add_common(sweep, s);
  sweep->add_option("--bits", bits, "Bitwidths of the swept target")->delimiter(',')->capture_default_str();
  sweep->add_option("--clips", clips, "Clip methods")
      ->delimiter(',')
      ->check(CLI::IsMember({"none", "mse", "aciq", "kl"}))
      ->capture_default_str();
  sweep->add_option("--ratios", ratios, "Expand ratios")->delimiter(',')->capture_default_str();
  sweep->add_option("--ocs-target", sweep_target, "Swept target")
      ->check(CLI::IsMember({"weights", "acts"}))
      ->capture_default_str();
  sweep->add_option("--threads", threads, "Worker threads (0 = all cores)");
  sweep->add_flag("--no-combined", no_combined, "Skip the OCS + best clip rows");

  std::string p_model, p_data, p_out;
  std::size_t p_samples = 512;
  std::uint64_t p_seed = 0;
  int p_bits = 8;
  auto* profile = app.add_subcommand("profile", "Activation statistics and clip thresholds per quantization point");
  profile->add_option("--model", p_model, "Model .qnt file")->required()->check(CLI::ExistingFile);
  profile->add_option("--data", p_data, "Dataset .qnt file")->required()->check(CLI::ExistingFile);
  profile->add_option("--profile-samples", p_samples, "Profiling samples")->capture_default_str();
  profile->add_option("--seed", p_seed, "Seed for the profiling subset")->capture_default_str();
  profile->add_option("--abits", p_bits, "Bitwidth for the listed thresholds")->capture_default_str();
  profile->add_option("--out", p_out, "Write CSV here instead of stdout");

  std::string i_model;
  auto* inspect = app.add_subcommand("inspect", "Print a model's layers");
  inspect->add_option("--model", i_model, "Model .qnt file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (quantize->parsed()) {
      const ReportRow row = cmd_quantize(to_config(q));
      if (q.out.empty()) std::cout << format_report(std::span(&row, 1));
    } else if (sweep->parsed()) {
      SweepConfig sc;
      sc.base = to_config(s);
      sc.base.out.reset();
      sc.bits = bits;
      for (const auto& c : clips) sc.clips.push_back(parse_clip_method(c));
      sc.ratios = ratios;
      sc.target = parse_split_target(sweep_target);
      sc.combined = !no_combined;
      sc.threads = threads;
      const Experiment exp = load_experiment(sc.base.model_path, sc.base.data_path);
      if (!s.name.empty()) sc.base.model_name = s.name;
      emit(format_report(run_sweep(exp, sc)), s.out);
    } else if (profile->parsed()) {
      if (p_bits < 2 || p_bits > 16) throw UsageError("--abits must be in [2, 16]");
      if (p_samples < 1) throw UsageError("--profile-samples must be at least 1");
      emit(profile_summary(load_experiment(p_model, p_data), p_samples, p_seed, p_bits), p_out);
    } else if (inspect->parsed()) {
      std::cout << inspect_model(load_model(i_model));
    }
  } catch (const UsageError& e) {
    std::cerr << "ocsq: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "ocsq: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
