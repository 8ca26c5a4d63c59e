// petseg: volumetric PET/CT segmentation pipeline CLI.
//
// Exit codes:
//   0  success
//   2  bad usage / malformed configuration
//   3  missing or unreadable file
//   4  malformed input data (NIfTI, UNW1, CSV)
//   5  pipeline error (shape mismatch, invalid parameters, ...)

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "petseg/augment.hpp"
#include "petseg/config.hpp"
#include "petseg/inference.hpp"
#include "petseg/metrics.hpp"
#include "petseg/nifti.hpp"
#include "petseg/resample.hpp"
#include "petseg/unet.hpp"
#include "petseg/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void log_json(const std::string& level, const std::string& msg,
              const json& extra = json::object()) {
    json line = extra;
    line["level"] = level;
    line["msg"] = msg;
    std::cerr << line.dump() << "\n";
}

petseg::Spacing3 parse_spacing(const std::vector<double>& v) {
    if (v.size() != 3) throw petseg::ConfigError("spacing needs exactly 3 components (z y x)");
    return {v[0], v[1], v[2]};
}

petseg::ArchDescriptor descriptor_for(const std::string& variant,
                                      const std::vector<int>& channels, int in_ch, int out_ch) {
    petseg::ArchDescriptor d;
    if (variant == "vanilla") d = petseg::ArchDescriptor::vanilla();
    else if (variant == "shallow") d = petseg::ArchDescriptor::shallow();
    else if (variant == "deeper") d = petseg::ArchDescriptor::deeper();
    else if (variant == "custom") {
        if (channels.empty())
            throw petseg::ConfigError("custom variant needs --channels");
        d.channels = channels;
        d.num_stages = static_cast<int>(channels.size());
    } else {
        throw petseg::ConfigError("unknown variant '" + variant + "'");
    }
    if (in_ch > 0) d.in_channels = in_ch;
    if (out_ch > 0) d.out_channels = out_ch;
    d.validate();
    return d;
}

std::string human_params(petseg::i64 n) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(1);
    os << static_cast<double>(n) / 1e6 << "M";
    return os.str();
}

std::vector<std::string> list_masks(const fs::path& dir) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string n = e.path().filename().string();
        if (n.ends_with(".nii") || n.ends_with(".nii.gz")) names.push_back(n);
    }
    std::sort(names.begin(), names.end());
    return names;
}

std::string case_stem(const std::string& filename) {
    std::string s = filename;
    if (s.ends_with(".gz")) s = s.substr(0, s.size() - 3);
    if (s.ends_with(".nii")) s = s.substr(0, s.size() - 4);
    return s;
}

int cmd_resample(const std::string& in, const std::string& out,
                 const std::vector<double>& spacing, const std::string& interp) {
    petseg::NiftiMeta meta;
    const petseg::Volume3D vol = petseg::read_nifti_file(in, petseg::MaskPolicy::Auto, &meta);
    petseg::ResampleSpec spec;
    spec.target_spacing = parse_spacing(spacing);
    spec.interpolation =
        (interp == "nearest" || vol.is_label()) ? petseg::Interp::Nearest : petseg::Interp::Trilinear;
    const petseg::Volume3D res = petseg::resample(vol, spec);
    petseg::write_nifti_file(out, res, &meta);
    log_json("info", "resampled",
             {{"in", in}, {"out", out}, {"shape", res.shape().str()}});
    return 0;
}

int cmd_augment(const std::string& in, const std::string& out, petseg::AugmentParams params) {
    const petseg::Volume3D vol = petseg::read_nifti_file(in);
    const petseg::AugmentationPlan plan = petseg::sample_plan(params);
    const petseg::Volume3D aug = petseg::apply_plan(vol, params, plan);
    petseg::write_nifti_file(out, aug);
    log_json("info", "augmented",
             {{"in", in},
              {"out", out},
              {"multiplier", plan.brightness_mult},
              {"gamma", plan.apply_gamma ? plan.gamma : 1.0},
              {"flips", {plan.flips[0], plan.flips[1], plan.flips[2]}},
              {"angles_deg", {plan.angles_deg[0], plan.angles_deg[1], plan.angles_deg[2]}}});
    return 0;
}

int cmd_predict(const std::string& case_dir, const std::string& out_prob,
                const std::string& out_mask, const petseg::PipelineConfig& cfg) {
    const fs::path dir(case_dir);
    const fs::path ct_path = dir / "CTres.nii.gz";
    const fs::path suv_path = dir / "SUV.nii.gz";
    if (!fs::exists(ct_path)) throw petseg::IoError("missing " + ct_path.string());
    if (!fs::exists(suv_path)) throw petseg::IoError("missing " + suv_path.string());
    if (cfg.fold_weights.empty())
        throw petseg::ConfigError("predict needs at least one fold weight file (--folds)");

    petseg::ResampleSpec rs{cfg.target_spacing, petseg::Interp::Trilinear};
    const petseg::Volume3D ct = petseg::resample(petseg::read_nifti_file(ct_path.string()), rs);
    const petseg::Volume3D pet = petseg::resample(petseg::read_nifti_file(suv_path.string()), rs);
    const petseg::MultiChannelVolume input = petseg::assemble_input(ct, pet, cfg.norm);

    std::vector<petseg::WeightStore> folds;
    for (const std::string& p : cfg.fold_weights) {
        if (!fs::exists(p)) throw petseg::IoError("missing fold weights: " + p);
        folds.push_back(petseg::load_weights(petseg::read_file(p)));
    }

    petseg::InferenceConfig icfg{cfg.patch_shape, cfg.step_fraction, cfg.sigma_scale};
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<petseg::Volume3D> probs = petseg::sliding_window_predict(
        std::span<const petseg::WeightStore>(folds), input, icfg, cfg.threads);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const petseg::Volume3D mask = petseg::argmax_mask(probs);
    if (!out_prob.empty()) petseg::write_nifti_file(out_prob, probs.back());
    if (!out_mask.empty()) petseg::write_nifti_file(out_mask, mask);
    log_json("info", "predicted",
             {{"case", case_dir}, {"folds", folds.size()}, {"seconds", secs}});
    return 0;
}

int cmd_evaluate(const std::string& pred_dir, const std::string& gt_dir,
                 const std::string& out_csv, const std::string& out_json,
                 petseg::Connectivity conn, double empty_empty_dice) {
    if (!fs::is_directory(pred_dir)) throw petseg::IoError("not a directory: " + pred_dir);
    if (!fs::is_directory(gt_dir)) throw petseg::IoError("not a directory: " + gt_dir);
    std::vector<petseg::CaseMetrics> all;
    for (const std::string& name : list_masks(pred_dir)) {
        const fs::path gt_path = fs::path(gt_dir) / name;
        if (!fs::exists(gt_path))
            throw petseg::IoError("ground truth missing for case: " + name);
        const petseg::Volume3D pred = petseg::read_nifti_file(
            (fs::path(pred_dir) / name).string(), petseg::MaskPolicy::RequireMask);
        const petseg::Volume3D gt =
            petseg::read_nifti_file(gt_path.string(), petseg::MaskPolicy::RequireMask);
        all.push_back(petseg::evaluate_case(case_stem(name), pred, gt, conn, empty_empty_dice));
    }
    if (all.empty()) throw petseg::IoError("no NIfTI masks found in " + pred_dir);

    std::ostringstream csv;
    csv << "case_id,dsc,fpv_ml,fnv_ml\n";
    csv.precision(9);
    double sum_dsc = 0, sum_fpv = 0, sum_fnv = 0;
    for (const auto& m : all) {
        csv << m.case_id << "," << m.dsc << "," << m.fpv_ml << "," << m.fnv_ml << "\n";
        sum_dsc += m.dsc;
        sum_fpv += m.fpv_ml;
        sum_fnv += m.fnv_ml;
    }
    if (out_csv.empty()) std::cout << csv.str();
    else {
        std::ofstream f(out_csv);
        f << csv.str();
    }
    const json summary = {{"cases", all.size()},
                          {"mean_dsc", sum_dsc / all.size()},
                          {"mean_fpv_ml", sum_fpv / all.size()},
                          {"mean_fnv_ml", sum_fnv / all.size()},
                          {"connectivity", static_cast<int>(conn)}};
    if (out_json.empty()) std::cout << summary.dump(2) << "\n";
    else {
        std::ofstream f(out_json);
        f << summary.dump(2) << "\n";
    }
    log_json("info", "evaluated", {{"cases", all.size()}});
    return 0;
}

int cmd_rank(const std::string& in_csv, const std::string& out_csv) {
    std::ifstream f(in_csv);
    if (!f) throw petseg::IoError("cannot open " + in_csv);
    std::vector<petseg::TeamMetrics> table;
    std::string line;
    bool header = true;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        std::istringstream ls(line);
        petseg::TeamMetrics t;
        std::string tok;
        if (!std::getline(ls, t.team, ',')) throw petseg::ParseError("rank: bad CSV row: " + line);
        try {
            std::getline(ls, tok, ',');
            t.dsc = std::stod(tok);
            std::getline(ls, tok, ',');
            t.fpv = std::stod(tok);
            std::getline(ls, tok, ',');
            t.fnv = std::stod(tok);
        } catch (const std::exception&) {
            throw petseg::ParseError("rank: bad CSV row: " + line);
        }
        table.push_back(t);
    }
    const auto rows = petseg::rank_teams(table);
    std::ostringstream os;
    os << "team,rank_dsc,rank_fpv,rank_fnv,score\n";
    for (const auto& r : rows)
        os << r.team << "," << r.rank_dsc << "," << r.rank_fpv << "," << r.rank_fnv << ","
           << r.score << "\n";
    if (out_csv.empty()) std::cout << os.str();
    else {
        std::ofstream out(out_csv);
        out << os.str();
    }
    return 0;
}

int cmd_describe(const petseg::ArchDescriptor& desc) {
    const auto layers = petseg::layer_inventory(desc);
    std::cout << desc.canonical_text() << "\n\n";
    std::cout << "layer                          shape                     params\n";
    for (const auto& l : layers) {
        std::ostringstream shape;
        shape << "(";
        for (std::size_t i = 0; i < l.dims.size(); ++i) shape << (i ? "," : "") << l.dims[i];
        shape << ")";
        std::cout << l.name;
        for (std::size_t i = l.name.size(); i < 31; ++i) std::cout << ' ';
        std::cout << shape.str();
        for (std::size_t i = shape.str().size(); i < 26; ++i) std::cout << ' ';
        std::cout << l.count() << "\n";
    }
    const petseg::i64 total = petseg::param_count(desc);
    std::cout << "\ntotal parameters: " << total << " (" << human_params(total) << ")\n";
    return 0;
}

int cmd_bench(petseg::i64 size, petseg::i64 patch, const std::vector<double>& steps,
              int threads) {
    petseg::ArchDescriptor toy;
    toy.num_stages = 2;
    toy.channels = {2, 4};
    const petseg::WeightStore store = petseg::WeightStore::zeros(toy);
    const petseg::Shape3 vs{size, size, size};
    std::vector<float> ones(static_cast<std::size_t>(vs.count()), 0.0f);
    std::vector<petseg::Volume3D> chans{
        petseg::Volume3D::intensity(vs, {1, 1, 1}, ones),
        petseg::Volume3D::intensity(vs, {1, 1, 1}, ones)};
    const petseg::MultiChannelVolume input(chans, {"CT", "PET"});
    std::vector<petseg::WeightStore> folds{store};

    std::cout << "step_fraction,tiles,seconds\n";
    for (double s : steps) {
        petseg::InferenceConfig cfg{{patch, patch, patch}, s, 0.125};
        const auto plan = petseg::build_tile_plan(vs, cfg.patch_shape, s);
        const auto t0 = std::chrono::steady_clock::now();
        petseg::sliding_window_predict(std::span<const petseg::WeightStore>(folds), input, cfg,
                                       threads);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << s << "," << plan.num_tiles() << "," << secs << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"petseg: PET/CT lesion segmentation pipeline toolkit"};
    app.require_subcommand(1);
    app.footer(
        "Exit codes: 0 success, 2 usage/config error, 3 missing file, "
        "4 malformed data, 5 pipeline error.");

    std::string config_path;
    app.add_option("--config", config_path, "Pipeline configuration file (TOML-style)");

    // resample
    auto* sc_resample = app.add_subcommand("resample", "Resample a NIfTI volume to a new spacing");
    std::string r_in, r_out, r_interp = "trilinear";
    std::vector<double> r_spacing{1.5, 1.01821005, 1.01821005};
    sc_resample->add_option("--in", r_in, "Input NIfTI")->required();
    sc_resample->add_option("--out", r_out, "Output NIfTI")->required();
    sc_resample->add_option("--spacing", r_spacing, "Target spacing, mm (z y x)")->expected(3);
    sc_resample->add_option("--interp", r_interp, "trilinear|nearest");

    // augment
    auto* sc_augment = app.add_subcommand("augment", "Apply one sampled augmentation plan");
    std::string a_in, a_out;
    petseg::AugmentParams a_params;
    sc_augment->add_option("--in", a_in, "Input NIfTI")->required();
    sc_augment->add_option("--out", a_out, "Output NIfTI")->required();
    sc_augment->add_option("--seed", a_params.seed, "Plan seed");
    sc_augment->add_option("--brightness-lo", a_params.brightness_mult_lo, "Multiplier range low");
    sc_augment->add_option("--brightness-hi", a_params.brightness_mult_hi, "Multiplier range high");
    sc_augment->add_option("--sigma", a_params.brightness_sigma, "Additive noise sigma");
    sc_augment->add_option("--gamma-lo", a_params.gamma_lo, "Gamma range low");
    sc_augment->add_option("--gamma-hi", a_params.gamma_hi, "Gamma range high");
    sc_augment->add_option("--gamma-prob", a_params.gamma_prob, "Gamma application probability");
    sc_augment->add_option("--flip-prob", a_params.flip_prob_per_axis, "Per-axis flip probability");
    sc_augment->add_option("--rot-lo", a_params.rotation_lo_deg, "Rotation range low, degrees");
    sc_augment->add_option("--rot-hi", a_params.rotation_hi_deg, "Rotation range high, degrees");

    // predict
    auto* sc_predict = app.add_subcommand("predict", "Sliding-window ensemble prediction");
    std::string p_case, p_out_prob, p_out_mask;
    std::vector<std::string> p_folds;
    std::vector<petseg::i64> p_patch;
    double p_step = -1, p_sigma_scale = -1;
    int p_threads = -1;
    sc_predict->add_option("--case", p_case, "Case directory (CTres.nii.gz + SUV.nii.gz)")
        ->required();
    sc_predict->add_option("--out-prob", p_out_prob, "Output probability NIfTI");
    sc_predict->add_option("--out-mask", p_out_mask, "Output mask NIfTI");
    sc_predict->add_option("--folds", p_folds, "Fold weight files (UNW1)");
    sc_predict->add_option("--patch", p_patch, "Patch shape (z y x)")->expected(3);
    sc_predict->add_option("--step", p_step, "Step fraction in (0, 1]");
    sc_predict->add_option("--sigma-scale", p_sigma_scale, "Gaussian sigma as patch fraction");
    sc_predict->add_option("--threads", p_threads, "Worker threads");

    // evaluate
    auto* sc_eval = app.add_subcommand("evaluate", "Compute DSC/FPV/FNV for a prediction set");
    std::string e_pred, e_gt, e_csv, e_json;
    int e_conn = -1;
    double e_eed = -1;
    sc_eval->add_option("--pred", e_pred, "Directory of predicted masks")->required();
    sc_eval->add_option("--gt", e_gt, "Directory of ground-truth masks")->required();
    sc_eval->add_option("--out-csv", e_csv, "Per-case CSV output path (default stdout)");
    sc_eval->add_option("--out-json", e_json, "Aggregate JSON output path (default stdout)");
    sc_eval->add_option("--connectivity", e_conn, "6|18|26");
    sc_eval->add_option("--empty-empty-dice", e_eed, "DSC when both masks are empty");

    // rank
    auto* sc_rank = app.add_subcommand("rank", "Rank-aggregate a team metric table");
    std::string k_in, k_out;
    sc_rank->add_option("--in", k_in, "CSV: team,dsc,fpv,fnv (with header)")->required();
    sc_rank->add_option("--out", k_out, "Leaderboard CSV output path (default stdout)");

    // describe-model
    auto* sc_desc = app.add_subcommand("describe-model", "Print the layer table and param count");
    std::string d_variant = "vanilla";
    std::vector<int> d_channels;
    int d_in = 0, d_out = 0;
    sc_desc->add_option("--variant", d_variant, "vanilla|shallow|deeper|custom");
    sc_desc->add_option("--channels", d_channels, "Stage channels for custom variant");
    sc_desc->add_option("--in-channels", d_in, "Input channels");
    sc_desc->add_option("--out-channels", d_out, "Output channels");

    // bench
    auto* sc_bench = app.add_subcommand("bench", "Tiles and wall time per step fraction");
    petseg::i64 b_size = 64, b_patch = 32;
    std::vector<double> b_steps{0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    int b_threads = 1;
    sc_bench->add_option("--size", b_size, "Synthetic volume side");
    sc_bench->add_option("--patch", b_patch, "Patch side");
    sc_bench->add_option("--steps", b_steps, "Step fractions to benchmark");
    sc_bench->add_option("--threads", b_threads, "Worker threads");

    CLI11_PARSE(app, argc, argv);

    try {
        petseg::PipelineConfig cfg;
        if (!config_path.empty()) {
            std::ifstream f(config_path);
            if (!f) throw petseg::IoError("cannot open config: " + config_path);
            std::stringstream ss;
            ss << f.rdbuf();
            cfg = petseg::parse_config(ss.str());
        }

        if (sc_resample->parsed()) return cmd_resample(r_in, r_out, r_spacing, r_interp);
        if (sc_augment->parsed()) {
            a_params.validate();
            return cmd_augment(a_in, a_out, a_params);
        }
        if (sc_predict->parsed()) {
            if (!p_folds.empty()) cfg.fold_weights = p_folds;
            if (p_patch.size() == 3) cfg.patch_shape = {p_patch[0], p_patch[1], p_patch[2]};
            if (p_step > 0) cfg.step_fraction = p_step;
            if (p_sigma_scale > 0) cfg.sigma_scale = p_sigma_scale;
            if (p_threads > 0) cfg.threads = p_threads;
            return cmd_predict(p_case, p_out_prob, p_out_mask, cfg);
        }
        if (sc_eval->parsed()) {
            petseg::Connectivity conn = cfg.connectivity;
            if (e_conn > 0) {
                if (e_conn != 6 && e_conn != 18 && e_conn != 26)
                    throw petseg::ConfigError("--connectivity must be 6, 18 or 26");
                conn = static_cast<petseg::Connectivity>(e_conn);
            }
            const double eed = e_eed >= 0 ? e_eed : cfg.empty_empty_dice;
            return cmd_evaluate(e_pred, e_gt, e_csv, e_json, conn, eed);
        }
        if (sc_rank->parsed()) return cmd_rank(k_in, k_out);
        if (sc_desc->parsed()) return cmd_describe(descriptor_for(d_variant, d_channels, d_in, d_out));
        if (sc_bench->parsed()) return cmd_bench(b_size, b_patch, b_steps, b_threads);
        return 2;
    } catch (const petseg::ConfigError& e) {
        log_json("error", e.what());
        return 2;
    } catch (const petseg::IoError& e) {
        log_json("error", e.what());
        return 3;
    } catch (const petseg::ParseError& e) {
        log_json("error", e.what());
        return 4;
    } catch (const petseg::Error& e) {
        log_json("error", e.what());
        return 5;
    } catch (const std::exception& e) {
        log_json("error", e.what());
        return 5;
    }
}
