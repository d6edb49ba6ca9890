// dsu: command-line driver for fitting, encoding and analyzing discrete units.

#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsu/convert.hpp"
#include "dsu/dsu.hpp"

namespace {

struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::vector<std::string> sets;
};

// Every config key is also a flag, spelled with dashes.
void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("-c,--config", f.config_file, "key=value config file");
  for (const auto& key : dsu::config_keys()) {
    std::string flag = "--" + key;
    for (char& ch : flag) {
      if (ch == '_') ch = '-';
    }
    cmd->add_option(flag, f.values[key], "overrides config key " + key);
  }
  cmd->add_option("--set", f.sets, "extra key=value override (repeatable)");
}

dsu::PipelineConfig resolve_config(const CLI::App* cmd, const ConfigFlags& f) {
  dsu::PipelineConfig c;
  if (!f.config_file.empty()) c = dsu::read_config(f.config_file);
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw dsu::ConfigError("--set expects key=value, got \"" + s + "\"");
    dsu::set_config_value(c, dsu::detail::trim(s.substr(0, eq)), dsu::detail::trim(s.substr(eq + 1)));
  }
  for (const auto& key : dsu::config_keys()) {
    std::string flag = "--" + key;
    for (char& ch : flag) {
      if (ch == '_') ch = '-';
    }
    if (cmd->count(flag) > 0) dsu::set_config_value(c, key, f.values.at(key));
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete speech unit extraction: preprocessing, k-means, BPE and analysis"};
  app.require_subcommand(1);
  app.set_version_flag("--version", dsu::kToolVersion);

  ConfigFlags fit_flags, encode_flags, analyze_flags;
  auto* fit = app.add_subcommand("fit", "fit preprocessing and k-means on a manifest");
  add_config_flags(fit, fit_flags);
  auto* encode = app.add_subcommand("encode", "encode a manifest into unit sequences and report bit-rate");
  add_config_flags(encode, encode_flags);
  auto* analyze = app.add_subcommand("analyze", "centroid similarity, neighbor and ICA component reports");
  add_config_flags(analyze, analyze_flags);

  std::string bpe_units, bpe_out;
  std::size_t bpe_base = 0, bpe_vocab = 3000;
  auto* bpe = app.add_subcommand("bpe-train", "train BPE merges on a unit file");
  bpe->add_option("--units", bpe_units, "unit file")->required();
  bpe->add_option("--base-vocab", bpe_base, "base vocabulary (k)")->required();
  bpe->add_option("--vocab", bpe_vocab, "target vocabulary size");
  bpe->add_option("-o,--out", bpe_out, "output BPE model")->required();

  std::string br_units, br_manifest, br_out;
  std::size_t br_vocab = 3000;
  auto* br = app.add_subcommand("bitrate", "bit-rate of an encoded unit file");
  br->add_option("--units", br_units, "unit file")->required();
  br->add_option("--manifest", br_manifest, "manifest with durations")->required();
  br->add_option("--vocab", br_vocab, "vocabulary size V");
  br->add_option("-o,--out", br_out, "JSON output (stdout when omitted)");

  std::string conv_in, conv_out;
  bool conv_to_text = false;
  auto* conv = app.add_subcommand("convert", "convert .npy or text arrays to the binary matrix format");
  conv->add_option("input", conv_in, ".npy, text matrix, or binary matrix")->required();
  conv->add_option("output", conv_out, "output path")->required();
  conv->add_flag("--to-text", conv_to_text, "write whitespace-separated text instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (fit->parsed()) {
      const auto r = dsu::cmd_fit(resolve_config(fit, fit_flags));
      std::cout << "fit: " << r.total_frames << " frames, " << r.sampled_frames << " sampled, k=" << r.model.k()
                << ", " << r.kmeans_iterations << " k-means iterations\n";
    } else if (encode->parsed()) {
      const auto r = dsu::cmd_encode(resolve_config(encode, encode_flags));
      std::cout << "encode: " << r.units.size() << " utterances, vocab " << r.bpe.vocab_size
                << ", mean bit-rate " << r.mean_bitrate << " bits/s\n";
    } else if (analyze->parsed()) {
      const auto r = dsu::cmd_analyze(resolve_config(analyze, analyze_flags));
      for (const auto& n : r.notices) std::cerr << "notice: " << n << "\n";
      std::cout << "analyze: mean centroid similarity " << r.histogram.mean_similarity << "\n";
    } else if (bpe->parsed()) {
      const auto m = dsu::cmd_bpe_train(bpe_units, bpe_base, bpe_vocab, bpe_out);
      std::cout << "bpe-train: " << m.merges.size() << " merges, vocab " << m.vocab_size << "\n";
    } else if (br->parsed()) {
      const auto j = dsu::cmd_bitrate(br_units, br_manifest, br_vocab);
      if (br_out.empty()) {
        std::cout << j.dump(2) << "\n";
      } else {
        dsu::io::write_text(br_out, j.dump(2) + "\n");
      }
    } else if (conv->parsed()) {
      const auto m = dsu::import_matrix(conv_in);
      if (conv_to_text) {
        dsu::io::write_text(conv_out, dsu::format_text_matrix(m));
      } else {
        dsu::write_matrix(m, conv_out);
      }
      std::cout << "convert: " << m.rows() << " x " << m.cols() << "\n";
    }
  } catch (const dsu::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return dsu::exit_code(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
