// kmfv: train / encode / decode / evaluate the kernel-based motion-free
// B-frame video codec on raw YUV420 files, PNG directories or synthetic
// sequences ("synth:<kind>:seed=S:n=N:size=Z").

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kmfv/bitstream.hpp"
#include "kmfv/codec_nets.hpp"
#include "kmfv/errors.hpp"
#include "kmfv/evalkit.hpp"
#include "kmfv/gop.hpp"
#include "kmfv/interpolation.hpp"
#include "kmfv/media_io.hpp"
#include "kmfv/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "kmfv 0.1.0";

std::string iso_now() {
  const auto t = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Every run appends one JSON line next to its primary output.
void write_manifest(const std::string& out_path, const json& manifest) {
  fs::path dir = fs::path(out_path).parent_path();
  if (dir.empty()) dir = ".";
  fs::create_directories(dir);
  std::ofstream out(dir / "kmfv_manifest.jsonl", std::ios::app);
  out << manifest.dump() << "\n";
}

std::map<std::string, std::string> parse_kv(const std::string& spec,
                                            std::size_t from) {
  std::map<std::string, std::string> kv;
  std::size_t pos = from;
  while (pos < spec.size()) {
    std::size_t next = spec.find(':', pos);
    if (next == std::string::npos) next = spec.size();
    const std::string part = spec.substr(pos, next - pos);
    const std::size_t eq = part.find('=');
    if (eq != std::string::npos) {
      kv[part.substr(0, eq)] = part.substr(eq + 1);
    }
    pos = next + 1;
  }
  return kv;
}

kmfv::VideoSequence load_sequence(const std::string& spec, int max_frames) {
  if (spec.rfind("synth:", 0) == 0) {
    const std::size_t kind_end = spec.find(':', 6);
    const std::string kind_name =
        spec.substr(6, kind_end == std::string::npos ? std::string::npos
                                                     : kind_end - 6);
    auto kv = parse_kv(spec, kind_end == std::string::npos ? spec.size()
                                                           : kind_end + 1);
    const auto kind = kmfv::synthetic_kind_from_name(kind_name);
    const std::uint64_t seed = kv.count("seed") ? std::stoull(kv["seed"]) : 1;
    int n = kv.count("n") ? std::stoi(kv["n"]) : 17;
    const int size = kv.count("size") ? std::stoi(kv["size"]) : 64;
    kmfv::SyntheticOptions opt;
    if (kv.count("vx")) opt.velocity_x = std::stod(kv["vx"]);
    if (kv.count("vy")) opt.velocity_y = std::stod(kv["vy"]);
    if (max_frames > 0 && max_frames < n) n = max_frames;
    return kmfv::make_synthetic_sequence(kind, n, size, seed, opt);
  }
  const std::size_t at = spec.rfind('@');
  if (at != std::string::npos && spec.find(".yuv") != std::string::npos) {
    const std::string path = spec.substr(0, at);
    const std::string dims = spec.substr(at + 1);
    const std::size_t x = dims.find('x');
    if (x == std::string::npos) {
      throw kmfv::UsageError("YUV input needs dimensions: file.yuv@WxH");
    }
    return kmfv::load_yuv420(path, std::stoi(dims.substr(0, x)),
                             std::stoi(dims.substr(x + 1)),
                             max_frames > 0 ? max_frames : 1 << 20);
  }
  if (fs::is_directory(spec)) return kmfv::load_image_dir(spec, max_frames);
  throw kmfv::UsageError(
      "cannot interpret input '" + spec +
      "' (expected synth:kind:..., dir of frame_%05d.png, or file.yuv@WxH)");
}

std::string sequence_name(const std::string& spec) {
  if (spec.rfind("synth:", 0) == 0) {
    std::string name = spec.substr(6);
    for (char& c : name) {
      if (c == ':' || c == '=') c = '-';
    }
    return name;
  }
  return fs::path(spec).stem().string();
}

void apply_config_file(const std::string& path, kmfv::TrainConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw kmfv::DataError("cannot open config " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw kmfv::DataError(path + ":" + std::to_string(line_no) +
                            ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "base_lambda") cfg.base_lambda = std::stod(val);
    else if (key == "learning_rate") cfg.learning_rate = std::stod(val);
    else if (key == "batch_size") cfg.batch_size = std::stoi(val);
    else if (key == "patch") cfg.patch = std::stoi(val);
    else if (key == "epochs") cfg.epochs = std::stoi(val);
    else if (key == "steps_per_epoch") cfg.steps_per_epoch = std::stoi(val);
    else if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "latent_channels") cfg.model.latent_channels = std::stoi(val);
    else if (key == "hyper_channels") cfg.model.hyper_channels = std::stoi(val);
    else if (key == "head_channels") cfg.model.head_channels = std::stoi(val);
    else if (key == "kernel_size") cfg.model.kernel_size = std::stoi(val);
    else if (key == "use_interpolator")
      cfg.model.use_interpolator = (val == "1" || val == "true");
    else if (key == "rate_per_pixel")
      cfg.rate_per_pixel = (val == "1" || val == "true");
    else if (key == "distortion_scale") cfg.distortion_scale = std::stod(val);
    else if (key == "straight_through")
      cfg.straight_through = (val == "1" || val == "true");
    else if (key == "grad_clip") cfg.grad_clip = std::stod(val);
    else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoi(val);
    else if (key == "interp_channels") cfg.interp_channels = std::stoi(val);
    else
      throw kmfv::DataError(path + ":" + std::to_string(line_no) +
                            ": unknown key '" + key + "'");
  }
}

json train_config_json(const kmfv::TrainConfig& cfg) {
  json j;
  j["base_lambda"] = cfg.base_lambda;
  j["learning_rate"] = cfg.learning_rate;
  j["batch_size"] = cfg.batch_size;
  j["patch"] = cfg.patch;
  j["epochs"] = cfg.epochs;
  j["steps_per_epoch"] = cfg.steps_per_epoch;
  j["seed"] = cfg.seed;
  j["model"] = json::parse(cfg.model.to_json());
  j["rate_per_pixel"] = cfg.rate_per_pixel;
  j["distortion_scale"] = cfg.distortion_scale;
  j["straight_through"] = cfg.straight_through;
  j["grad_clip"] = cfg.grad_clip;
  return j;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(kVersion) +
               " - kernel-based motion-free B-frame video codec"};
  app.require_subcommand(0, 1);

  int print_schedule_frames = 0;
  int print_schedule_gop = 8;
  app.add_option("--print-schedule", print_schedule_frames,
                 "print the coding schedule for N frames and exit");
  app.add_option("--gop", print_schedule_gop, "GoP size for --print-schedule");

  auto odd_ks = CLI::Validator(
      [](std::string& s) -> std::string {
        const int v = std::stoi(s);
        if (v <= 0 || v % 2 == 0) {
          return "kernel size must be odd and positive (paper sizes: 31, 51)";
        }
        return {};
      },
      "ODD");

  // --- pretrain-interp ---
  auto* sc_pre = app.add_subcommand("pretrain-interp",
                                    "pretrain the frame interpolator");
  kmfv::InterpPretrainConfig pre_cfg;
  std::string pre_out = "interp.kmfc";
  sc_pre->add_option("--epochs", pre_cfg.epochs, "training epochs");
  sc_pre->add_option("--steps-per-epoch", pre_cfg.steps_per_epoch, "");
  sc_pre->add_option("--batch", pre_cfg.batch_size, "");
  sc_pre->add_option("--patch", pre_cfg.patch, "");
  sc_pre->add_option("--channels", pre_cfg.base_channels, "base channel width");
  sc_pre->add_option("--lr", pre_cfg.learning_rate, "");
  sc_pre->add_option("--seed", pre_cfg.seed, "");
  sc_pre->add_option("--out", pre_out, "output checkpoint")->required();

  // --- train ---
  auto* sc_train = app.add_subcommand("train", "train the video codec");
  kmfv::TrainConfig tr_cfg;
  tr_cfg.batch_size = 2; // desk-scale default; the paper uses 8
  tr_cfg.patch = 64;
  std::string tr_lambda = "0.01";
  std::string tr_out = "codec.kmfc";
  std::string tr_interp, tr_config, tr_csv;
  int tr_ks = 0, tr_m = 0, tr_n = 0, tr_k = 0;
  int tr_dataset_sequences = 24, tr_dataset_size = 96;
  bool tr_no_interp = false;
  sc_train
      ->add_option("--lambda", tr_lambda, "base lambda")
      ->check(CLI::IsMember({"0.005", "0.01", "0.03", "0.05"}));
  sc_train->add_option("--interp-ckpt", tr_interp,
                       "pretrained interpolator checkpoint");
  sc_train->add_option("--out", tr_out, "output checkpoint")->required();
  sc_train->add_option("--config", tr_config,
                       "key=value config file (flags win on conflict)");
  sc_train->add_option("--csv", tr_csv, "metrics log path");
  sc_train->add_option("--epochs", tr_cfg.epochs, "");
  sc_train->add_option("--steps-per-epoch", tr_cfg.steps_per_epoch, "");
  sc_train->add_option("--batch", tr_cfg.batch_size, "");
  sc_train->add_option("--patch", tr_cfg.patch, "");
  sc_train->add_option("--lr", tr_cfg.learning_rate, "");
  sc_train->add_option("--seed", tr_cfg.seed, "");
  sc_train->add_option("--ks", tr_ks, "kernel size (31 or 51 in the paper)")
      ->check(odd_ks);
  sc_train->add_option("--latent-channels", tr_m, "");
  sc_train->add_option("--hyper-channels", tr_n, "");
  sc_train->add_option("--head-channels", tr_k, "");
  sc_train->add_option("--dataset-sequences", tr_dataset_sequences, "");
  sc_train->add_option("--dataset-size", tr_dataset_size, "");
  sc_train->add_flag("--no-interp", tr_no_interp,
                     "4-kernel ablation without the interpolated reference");

  // --- encode ---
  auto* sc_enc = app.add_subcommand("encode", "encode a sequence to .kmfv");
  std::string enc_in, enc_ckpt, enc_out = "out.kmfv";
  int enc_gop = 8, enc_max_frames = 0;
  sc_enc->add_option("--in", enc_in, "input sequence")->required();
  sc_enc->add_option("--ckpt", enc_ckpt, "codec checkpoint")->required();
  sc_enc->add_option("--gop", enc_gop, "GoP size");
  sc_enc->add_option("--max-frames", enc_max_frames, "");
  sc_enc->add_option("--out", enc_out, "output bitstream")->required();

  // --- decode ---
  auto* sc_dec = app.add_subcommand("decode", "decode a .kmfv bitstream");
  std::string dec_in, dec_ckpt, dec_out = "decoded";
  sc_dec->add_option("--in", dec_in, "input bitstream")->required();
  sc_dec->add_option("--ckpt", dec_ckpt, "codec checkpoint")->required();
  sc_dec->add_option("--out", dec_out, "output PNG directory")->required();

  // --- eval ---
  auto* sc_eval = app.add_subcommand("eval", "rate-distortion evaluation");
  std::vector<std::string> ev_ckpts, ev_seqs;
  kmfv::EvalOptions ev_opt;
  bool ev_no_intra = false;
  sc_eval->add_option("--ckpts", ev_ckpts, "checkpoints (one per lambda)")
      ->required()
      ->delimiter(',');
  sc_eval->add_option("--seqs", ev_seqs, "sequences")->required()->delimiter(',');
  sc_eval->add_option("--gop", ev_opt.gop_size, "");
  sc_eval->add_option("--out", ev_opt.out_dir, "output directory")->required();
  sc_eval->add_option("--dataset", ev_opt.dataset_name, "dataset label");
  sc_eval->add_flag("--no-intra-baseline", ev_no_intra, "");

  // --- bdrate ---
  auto* sc_bd = app.add_subcommand("bdrate", "BD-rate between two RD CSVs");
  std::string bd_anchor, bd_test, bd_anchor_codec, bd_test_codec;
  sc_bd->add_option("--anchor", bd_anchor, "anchor CSV")->required();
  sc_bd->add_option("--test", bd_test, "test CSV")->required();
  sc_bd->add_option("--anchor-codec", bd_anchor_codec,
                    "codec column filter for the anchor");
  sc_bd->add_option("--test-codec", bd_test_codec, "");

  // --- report ---
  auto* sc_rep = app.add_subcommand("report", "per-module parameter report");
  std::string rep_ckpt;
  sc_rep->add_option("--ckpt", rep_ckpt, "checkpoint")->required();

  try {
    app.parse(argc, argv);

    if (print_schedule_frames > 0) {
      std::cout << kmfv::schedule_to_string(
          kmfv::build_schedule(print_schedule_frames, print_schedule_gop));
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cout << app.help();
      return 0;
    }

    if (sc_pre->parsed()) {
      const std::string started = iso_now();
      kmfv::InterpPretrainResult res = kmfv::pretrain_interpolator(pre_cfg);
      res.store.save(pre_out);
      for (std::size_t e = 0; e < res.epoch_losses.size(); ++e) {
        std::printf("epoch %zu: loss %.6g\n", e, res.epoch_losses[e]);
      }
      std::printf("saved %s (id %u)\n", pre_out.c_str(),
                  res.store.content_id());
      write_manifest(pre_out,
                     {{"subcommand", "pretrain-interp"},
                      {"seed", pre_cfg.seed},
                      {"config",
                       {{"epochs", pre_cfg.epochs},
                        {"steps_per_epoch", pre_cfg.steps_per_epoch},
                        {"batch", pre_cfg.batch_size},
                        {"patch", pre_cfg.patch},
                        {"channels", pre_cfg.base_channels},
                        {"lr", pre_cfg.learning_rate}}},
                      {"checkpoint_id", res.store.content_id()},
                      {"version", kVersion},
                      {"started", started},
                      {"finished", iso_now()}});
      return 0;
    }

    if (sc_train->parsed()) {
      if (!tr_config.empty()) {
        // config file provides the base; explicitly passed flags win
        kmfv::TrainConfig file_cfg;
        file_cfg.batch_size = 2;
        file_cfg.patch = 64;
        apply_config_file(tr_config, file_cfg);
        if (sc_train->count("--epochs")) file_cfg.epochs = tr_cfg.epochs;
        if (sc_train->count("--steps-per-epoch")) {
          file_cfg.steps_per_epoch = tr_cfg.steps_per_epoch;
        }
        if (sc_train->count("--batch")) file_cfg.batch_size = tr_cfg.batch_size;
        if (sc_train->count("--patch")) file_cfg.patch = tr_cfg.patch;
        if (sc_train->count("--lr")) file_cfg.learning_rate = tr_cfg.learning_rate;
        if (sc_train->count("--seed")) file_cfg.seed = tr_cfg.seed;
        if (!sc_train->count("--lambda")) {
          tr_lambda = std::to_string(file_cfg.base_lambda);
        }
        tr_cfg = file_cfg;
      }
      tr_cfg.base_lambda = std::stod(tr_lambda);
      if (tr_ks > 0) tr_cfg.model.kernel_size = tr_ks;
      if (tr_m > 0) tr_cfg.model.latent_channels = tr_m;
      if (tr_n > 0) tr_cfg.model.hyper_channels = tr_n;
      if (tr_k > 0) tr_cfg.model.head_channels = tr_k;
      if (tr_no_interp) tr_cfg.model.use_interpolator = false;

      kmfv::ParameterStore interp_store;
      const kmfv::ParameterStore* interp_ptr = nullptr;
      if (tr_cfg.model.use_interpolator) {
        if (tr_interp.empty()) {
          throw kmfv::UsageError(
              "train: --interp-ckpt is required (run pretrain-interp first) "
              "or pass --no-interp");
        }
        interp_store = kmfv::ParameterStore::load(tr_interp);
        interp_ptr = &interp_store;
      }
      const std::string started = iso_now();
      kmfv::TupleDataset data(tr_dataset_sequences, tr_dataset_size,
                              tr_cfg.seed + 1000);
      kmfv::TrainResult res =
          kmfv::train(data, tr_cfg, interp_ptr, tr_csv, tr_out);
      const auto& last = res.log.back();
      std::printf("trained %d steps, final loss %.6g (saved %s, id %u)\n",
                  static_cast<int>(res.log.size()), last.loss, tr_out.c_str(),
                  res.store.content_id());
      json manifest = {{"subcommand", "train"},
                       {"seed", tr_cfg.seed},
                       {"config", train_config_json(tr_cfg)},
                       {"checkpoint_id", res.store.content_id()},
                       {"interp_checkpoint", tr_interp},
                       {"version", kVersion},
                       {"started", started},
                       {"finished", iso_now()}};
      write_manifest(tr_out, manifest);
      return 0;
    }

    if (sc_enc->parsed()) {
      const std::string started = iso_now();
      kmfv::ParameterStore store = kmfv::ParameterStore::load(enc_ckpt);
      const kmfv::VideoSequence seq = load_sequence(enc_in, enc_max_frames);
      const kmfv::EncodeResult res = kmfv::encode_video(seq, store, enc_gop);
      kmfv::write_file(enc_out, res.container);
      double psnr = 0.0;
      for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        psnr += kmfv::rgb_psnr(seq.frames[i], res.reconstructions[i]);
      }
      psnr /= static_cast<double>(seq.frames.size());
      std::printf("%s: %zu frames, %.4f bpp, %.2f dB (container %zu bytes)\n",
                  enc_out.c_str(), seq.frames.size(), res.bpp, psnr,
                  res.container.size());
      for (const kmfv::FrameBitStats& s : res.stats) {
        std::printf("  frame %d %s: %zu bits (estimated %.1f)\n",
                    s.display_index, s.type == kmfv::FrameType::I ? "I" : "B",
                    s.actual_bits, s.estimated_bits);
      }
      write_manifest(enc_out, {{"subcommand", "encode"},
                               {"input", enc_in},
                               {"gop", enc_gop},
                               {"checkpoint_id", store.content_id()},
                               {"bpp", res.bpp},
                               {"psnr", psnr},
                               {"version", kVersion},
                               {"started", started},
                               {"finished", iso_now()}});
      return 0;
    }

    if (sc_dec->parsed()) {
      const std::string started = iso_now();
      kmfv::ParameterStore store = kmfv::ParameterStore::load(dec_ckpt);
      const auto bytes = kmfv::read_file(dec_in);
      const kmfv::VideoSequence out = kmfv::decode_video(bytes, store);
      kmfv::save_image_dir(out, dec_out);
      std::printf("decoded %zu frames %dx%d -> %s\n", out.frames.size(),
                  out.width(), out.height(), dec_out.c_str());
      write_manifest(dec_out + "/manifest", {{"subcommand", "decode"},
                                             {"input", dec_in},
                                             {"checkpoint_id", store.content_id()},
                                             {"frames", out.frames.size()},
                                             {"version", kVersion},
                                             {"started", started},
                                             {"finished", iso_now()}});
      return 0;
    }

    if (sc_eval->parsed()) {
      const std::string started = iso_now();
      ev_opt.intra_baseline = !ev_no_intra;
      std::vector<std::pair<std::string, kmfv::VideoSequence>> seqs;
      for (const std::string& s : ev_seqs) {
        seqs.emplace_back(sequence_name(s), load_sequence(s, 0));
      }
      const kmfv::EvalResult res = kmfv::evaluate(seqs, ev_ckpts, ev_opt);
      for (const auto& [codec, curve] : res.curves) {
        std::printf("%s:\n", codec.c_str());
        for (const auto& p : curve.points) {
          std::printf("  %.4f bpp  %.2f dB  (%s)\n", p.bpp, p.psnr,
                      p.label.c_str());
        }
      }
      if (!res.csv_file.empty()) std::printf("csv: %s\n", res.csv_file.c_str());
      for (const std::string& f : res.plot_files) {
        std::printf("plot: %s\n", f.c_str());
      }
      write_manifest(ev_opt.out_dir + "/manifest",
                     {{"subcommand", "eval"},
                      {"checkpoints", ev_ckpts},
                      {"gop", ev_opt.gop_size},
                      {"skipped", res.skipped},
                      {"version", kVersion},
                      {"started", started},
                      {"finished", iso_now()}});
      return 0;
    }

    if (sc_bd->parsed()) {
      const auto anchor_rows = kmfv::read_rd_csv(bd_anchor);
      const auto test_rows = kmfv::read_rd_csv(bd_test);
      auto pick_codec = [](const std::vector<kmfv::EvalRow>& rows,
                           std::string wanted, const char* which) {
        if (!wanted.empty()) return wanted;
        std::string found;
        for (const auto& r : rows) {
          if (found.empty()) found = r.codec;
          if (r.codec != found) {
            throw kmfv::UsageError(std::string("bdrate: ") + which +
                                   " CSV has multiple codecs; pass --" + which +
                                   "-codec");
          }
        }
        return found;
      };
      bd_anchor_codec = pick_codec(anchor_rows, bd_anchor_codec, "anchor");
      bd_test_codec = pick_codec(test_rows, bd_test_codec, "test");
      const kmfv::RDCurve anchor =
          kmfv::curve_from_rows(anchor_rows, bd_anchor_codec);
      const kmfv::RDCurve test = kmfv::curve_from_rows(test_rows, bd_test_codec);
      const double bd = kmfv::bd_rate(anchor, test);
      std::printf("BD-rate (%s vs %s): %+.2f%%\n", bd_test_codec.c_str(),
                  bd_anchor_codec.c_str(), bd);
      return 0;
    }

    if (sc_rep->parsed()) {
      kmfv::ParameterStore store = kmfv::ParameterStore::load(rep_ckpt);
      const auto rows = kmfv::parameter_report(store);
      std::size_t total = 0;
      for (const auto& r : rows) total += r.param_count;
      std::printf("%-34s %12s %8s\n", "Module", "Params", "Share");
      for (const auto& r : rows) {
        std::printf("%-34s %12zu %7.2f%%\n", r.label.c_str(), r.param_count,
                    r.share_pct);
      }
      std::printf("%-34s %12zu\n", "Total", total);
      std::printf("checkpoint id: %u\n", store.content_id());
      const std::string cfg = store.metadata("cfg");
      if (!cfg.empty()) std::printf("config: %s\n", cfg.c_str());
      return 0;
    }

    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const kmfv::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const kmfv::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
