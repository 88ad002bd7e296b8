#include "etlab/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "etlab/rng.hpp"

namespace etlab {

namespace {

constexpr uint64_t kTagEvalExample = 0x45564558ull;  // "EVEX"
constexpr uint64_t kTagEvalQuery = 0x45565155ull;    // "EVQU"
constexpr uint64_t kTagEvalNoise = 0x45564e4full;    // "EVNO"
constexpr uint64_t kTagBootstrap = 0x424f4f54ull;    // "BOOT"

std::string csv_num(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

Json json_num(double v) {
    if (std::isinf(v)) return Json(v > 0 ? "inf" : "-inf");
    return Json(v);
}

Json record_to_json(const SampleRecord& r) {
    Json j;
    j["sample_id"] = r.sample_id;
    j["true_edits"] = r.true_edits;
    j["predicted"] = r.predicted;
    if (!r.predicted_set.empty()) j["predicted_set"] = r.predicted_set;
    j["correct"] = r.correct;
    j["margin"] = json_num(r.margin);
    j["mse"] = json_num(r.mse);
    j["psnr"] = json_num(r.psnr);
    j["silhouette_iou"] = json_num(r.silhouette_iou);
    j["identity_mse"] = json_num(r.identity_mse);
    return j;
}

/// Mean that maps +inf PSNR entries to the max finite entry (or +inf if all
/// are exact); keeps aggregates well-defined.
double mean_psnr_of(const std::vector<SampleRecord>& records) {
    double max_finite = 0;
    bool any_finite = false;
    for (const auto& r : records)
        if (std::isfinite(r.psnr)) {
            max_finite = std::max(max_finite, r.psnr);
            any_finite = true;
        }
    if (!any_finite) return std::numeric_limits<double>::infinity();
    double acc = 0;
    for (const auto& r : records) acc += std::isfinite(r.psnr) ? r.psnr : max_finite;
    return acc / static_cast<double>(records.size());
}

struct QueryOutcome {
    CompositeSample sample;
    Image generated;
};

QueryOutcome run_query(const VelocityProvider& provider, const std::vector<std::string>& edits,
                       uint64_t ex_seed, uint64_t q_seed, uint64_t noise_seed, int steps,
                       const CanvasSpec& canvas, const EditTaxonomy& taxonomy) {
    QueryOutcome out;
    out.sample = make_sample(edits, ex_seed, q_seed, canvas, /*with_target=*/false, taxonomy);
    const SampleTokens<float> tk = tokenize_sample<float>(out.sample, canvas.patch_px);
    auto vfn = provider.make(out.sample);
    out.generated =
        quantized(euler_sample_with(vfn, tk, make_schedule<float>(steps), noise_seed));
    return out;
}

void check_leakage(uint64_t ex_seed, uint64_t q_seed, const std::set<uint64_t>& training_seeds) {
    if (training_seeds.count(ex_seed) || training_seeds.count(q_seed))
        throw LeakageError("evaluation identity seed appears in the training manifest");
}

std::pair<double, double> bootstrap_ci(const std::vector<int>& outcomes, uint64_t seed) {
    // 200-resample percentile bootstrap of the mean.
    constexpr int kResamples = 200;
    std::vector<double> means;
    means.reserve(kResamples);
    Rng rng(mix_seed(seed, kTagBootstrap));
    for (int r = 0; r < kResamples; ++r) {
        double acc = 0;
        for (size_t i = 0; i < outcomes.size(); ++i)
            acc += outcomes[static_cast<size_t>(rng.uniform_index(outcomes.size()))];
        means.push_back(acc / static_cast<double>(outcomes.size()));
    }
    std::sort(means.begin(), means.end());
    return {means[static_cast<size_t>(0.025 * kResamples)],
            means[static_cast<size_t>(0.975 * kResamples) - 1]};
}

}  // namespace

void EvalSpec::validate() const {
    if (edits.empty()) throw ConfigError("EvalSpec: edits must be non-empty");
    if (n_queries < 0) throw ConfigError("EvalSpec: n_queries must be >= 0");
    if (steps < 1) throw BadSchedule("EvalSpec: steps must be >= 1");
    if (panel_px <= 0 || panel_px % 16 != 0)
        throw ConfigError("EvalSpec: panel_px must be a positive multiple of 16");
    for (const auto& e : edits) default_taxonomy().find(e);
}

Json to_json(const EvalSpec& s) {
    Json j;
    j["edits"] = s.edits;
    j["n_queries"] = s.n_queries;
    j["eval_seed"] = s.eval_seed;
    j["steps"] = s.steps;
    j["panel_px"] = s.panel_px;
    return j;
}

EvalSpec eval_spec_from_json(const Json& j) {
    check_keys(j, {"edits", "n_queries", "eval_seed", "steps", "panel_px"}, {"edits"}, "EvalSpec");
    EvalSpec s;
    s.edits = j["edits"].get<std::vector<std::string>>();
    if (j.contains("n_queries")) s.n_queries = j["n_queries"].get<int>();
    if (j.contains("eval_seed")) s.eval_seed = j["eval_seed"].get<uint64_t>();
    if (j.contains("steps")) s.steps = j["steps"].get<int>();
    if (j.contains("panel_px")) s.panel_px = j["panel_px"].get<int>();
    s.validate();
    return s;
}

Json to_json(const EvalReport& r) {
    Json j;
    j["taxonomy_size"] = r.taxonomy_size;
    j["chance"] = r.chance;
    j["empty"] = r.empty;
    j["accuracy"] = r.accuracy;
    j["mean_mse"] = json_num(r.mean_mse);
    j["mean_psnr"] = json_num(r.mean_psnr);
    j["mean_iou"] = json_num(r.mean_iou);
    j["mean_identity_mse"] = json_num(r.mean_identity_mse);
    j["recolor_accuracy"] = r.recolor_accuracy ? Json(*r.recolor_accuracy) : Json(nullptr);
    j["baseline"] = r.baseline;
    j["provenance"] = r.provenance;
    Json recs = Json::array();
    for (const auto& rec : r.records) recs.push_back(record_to_json(rec));
    j["records"] = recs;
    return j;
}

std::string eval_report_csv(const EvalReport& r) {
    std::ostringstream os;
    os << "taxonomy_size,n_records,baseline,empty,accuracy,chance,mean_mse,mean_psnr,mean_iou,"
          "mean_identity_mse,recolor_accuracy\n";
    os << r.taxonomy_size << "," << r.records.size() << "," << (r.baseline ? 1 : 0) << ","
       << (r.empty ? 1 : 0) << "," << csv_num(r.accuracy) << "," << csv_num(r.chance) << ","
       << csv_num(r.mean_mse) << "," << csv_num(r.mean_psnr) << "," << csv_num(r.mean_iou) << ","
       << csv_num(r.mean_identity_mse) << ","
       << (r.recolor_accuracy ? csv_num(*r.recolor_accuracy) : "na") << "\n";
    return os.str();
}

VelocityProvider model_provider(std::shared_ptr<const Model<float>> model) {
    VelocityProvider p;
    p.name = "model";
    p.make = [model](const CompositeSample& sample) {
        const int patch = model->cfg.patch_px;
        auto tk = std::make_shared<SampleTokens<float>>(tokenize_sample<float>(sample, patch));
        auto st = std::make_shared<FlowState<float>>();
        st->cond_rows = tk->cond_rows;
        st->target_rows = tk->target_rows;
        st->positions = tk->positions;
        st->prompt_ids = tk->prompt_ids;
        st->grid_side = tk->grid_side;
        st->patch_px = tk->patch_px;
        st->cond.resize(static_cast<Eigen::Index>(tk->cond_rows.size()), tk->patches.cols());
        for (size_t i = 0; i < tk->cond_rows.size(); ++i)
            st->cond.row(static_cast<Eigen::Index>(i)) = tk->patches.row(tk->cond_rows[i]);
        return [model, st](const MatF& z, float t) {
            st->t = t;
            return forward_velocity(*model, assemble_input(*st, z));
        };
    };
    return p;
}

VelocityProvider oracle_stub_provider(int patch_px) {
    VelocityProvider p;
    p.name = "oracle";
    p.make = [patch_px](const CompositeSample& sample) {
        CanvasSpec canvas;
        canvas.panel_px = sample.panel_px;
        canvas.patch_px = patch_px;
        const Image target = quantized(render_sprite(sample.query_edited_params, canvas));
        auto z0 = std::make_shared<MatF>(to_model_space(extract_patches<float>(target, patch_px)));
        return [z0](const MatF& z, float t) -> MatF {
            // On-path form of the constant oracle velocity eps - z0: the
            // sampler never evaluates at t = 0.
            return (z - *z0) / t;
        };
    };
    return p;
}

VelocityProvider noise_stub_provider() {
    VelocityProvider p;
    p.name = "noise";
    p.make = [](const CompositeSample&) {
        return [](const MatF& z, float) { return MatF(MatF::Zero(z.rows(), z.cols())); };
    };
    return p;
}

Image oracle_target(const SpriteParams& query_params, const std::vector<std::string>& edit_names,
                    const CanvasSpec& canvas, const EditTaxonomy& taxonomy) {
    const EditOp composed = compose_edits(edit_names, taxonomy);
    return quantized(render_sprite(apply_edit(query_params, composed), canvas));
}

std::pair<std::string, double> classify_edit(const Image& generated,
                                             const SpriteParams& query_params,
                                             const EditTaxonomy& taxonomy,
                                             const CanvasSpec& canvas) {
    if (generated.width != canvas.panel_px || generated.height != canvas.panel_px)
        throw ShapeError("classify_edit: generated panel has wrong dimensions");
    int best = -1;
    double best_mse = std::numeric_limits<double>::infinity();
    double second_mse = std::numeric_limits<double>::infinity();
    for (int i = 0; i < taxonomy.size(); ++i) {
        const Image oracle = oracle_target(query_params, {taxonomy.edits[static_cast<size_t>(i)].name},
                                           canvas, taxonomy);
        const double mse = image_mse(generated, oracle);
        if (mse < best_mse) {  // strict: ties keep the lowest taxonomy index
            second_mse = best_mse;
            best_mse = mse;
            best = i;
        } else if (mse < second_mse) {
            second_mse = mse;
        }
    }
    if (taxonomy.size() == 1) second_mse = best_mse;
    return {taxonomy.edits[static_cast<size_t>(best)].name, second_mse - best_mse};
}

std::vector<uint8_t> generated_silhouette(const Image& generated, const Color& background) {
    Color bg = background;
    for (float& c : bg) c = dequantize_channel(quantize_channel(c));
    std::vector<uint8_t> mask(static_cast<size_t>(generated.width) * generated.height, 0);
    for (int y = 0; y < generated.height; ++y)
        for (int x = 0; x < generated.width; ++x) {
            bool fg = false;
            for (int c = 0; c < 3; ++c)
                if (std::abs(generated.at(y, x, c) - bg[c]) > 0.5f / 255.0f) fg = true;
            if (fg) mask[static_cast<size_t>(y) * generated.width + x] = 1;
        }
    return mask;
}

double mask_iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
    if (a.size() != b.size()) throw ShapeError("mask_iou: size mismatch");
    long inter = 0, uni = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        const bool x = a[i] != 0, y = b[i] != 0;
        inter += (x && y) ? 1 : 0;
        uni += (x || y) ? 1 : 0;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double identity_region_mse(const Image& generated, const SpriteParams& query_params,
                           const std::vector<std::string>& edit_names, const CanvasSpec& canvas,
                           const EditTaxonomy& taxonomy) {
    const EditOp composed = compose_edits(edit_names, taxonomy);
    std::vector<uint8_t> before_mask, after_mask;
    const Image before = quantized(render_sprite_with_mask(query_params, canvas, before_mask));
    const Image after = quantized(
        render_sprite_with_mask(apply_edit(query_params, composed), canvas, after_mask));
    (void)after;
    double acc = 0;
    long count = 0;
    for (int y = 0; y < canvas.panel_px; ++y)
        for (int x = 0; x < canvas.panel_px; ++x) {
            const size_t i = static_cast<size_t>(y) * canvas.panel_px + x;
            if (before_mask[i] || after_mask[i]) continue;
            for (int c = 0; c < 3; ++c) {
                const double d = static_cast<double>(generated.at(y, x, c)) - before.at(y, x, c);
                acc += d * d;
                ++count;
            }
        }
    if (count == 0) return 0.0;
    return acc / static_cast<double>(count);
}

EvalReport evaluate(const VelocityProvider& provider, const EvalSpec& spec,
                    const std::set<uint64_t>& training_seeds, const EditTaxonomy& taxonomy,
                    std::vector<std::pair<CompositeSample, Image>>* sheets) {
    spec.validate();
    CanvasSpec canvas;
    canvas.panel_px = spec.panel_px;
    const EditTaxonomy subset = taxonomy.subset(spec.edits);

    EvalReport report;
    report.taxonomy_size = subset.size();
    report.chance = 1.0 / subset.size();
    report.provenance = Json{{"spec", to_json(spec)}, {"provider", provider.name}};

    int recolor_total = 0, recolor_correct = 0;
    for (int ei = 0; ei < subset.size(); ++ei) {
        const std::string& edit = subset.edits[static_cast<size_t>(ei)].name;
        for (int q = 0; q < spec.n_queries; ++q) {
            const uint64_t ex_seed =
                mix_seed(spec.eval_seed, kTagEvalExample, uint64_t(ei), uint64_t(q));
            const uint64_t q_seed =
                mix_seed(spec.eval_seed, kTagEvalQuery, uint64_t(ei), uint64_t(q));
            check_leakage(ex_seed, q_seed, training_seeds);
            const uint64_t noise_seed =
                mix_seed(spec.eval_seed, kTagEvalNoise, uint64_t(ei), uint64_t(q));
            QueryOutcome out =
                run_query(provider, {edit}, ex_seed, q_seed, noise_seed, spec.steps, canvas,
                          taxonomy);

            SampleRecord rec;
            rec.sample_id = "eval_" + edit + "_" + std::to_string(q);
            rec.true_edits = {edit};
            const Image oracle = oracle_target(out.sample.query_params, {edit}, canvas, taxonomy);
            auto [pred, margin] = classify_edit(out.generated, out.sample.query_params, subset,
                                                canvas);
            rec.predicted = pred;
            rec.margin = margin;
            rec.correct = pred == edit;
            rec.mse = image_mse(out.generated, oracle);
            rec.psnr = image_psnr(out.generated, oracle);
            std::vector<uint8_t> oracle_mask;
            CanvasSpec c2 = canvas;
            const Image oracle_img = render_sprite_with_mask(
                apply_edit(out.sample.query_params, compose_edits({edit}, taxonomy)), c2,
                oracle_mask);
            (void)oracle_img;
            rec.silhouette_iou = mask_iou(
                generated_silhouette(out.generated, out.sample.query_params.background_color),
                oracle_mask);
            rec.identity_mse =
                identity_region_mse(out.generated, out.sample.query_params, {edit}, canvas,
                                    taxonomy);
            if (edit == "recolor_shirt") {
                ++recolor_total;
                if (rec.correct) ++recolor_correct;
            }
            report.records.push_back(rec);
            if (sheets) sheets->emplace_back(out.sample, out.generated);
        }
    }

    if (report.records.empty()) {
        report.empty = true;
        return report;
    }
    long correct = 0;
    double mse = 0, iou = 0, ident = 0;
    for (const auto& r : report.records) {
        correct += r.correct ? 1 : 0;
        mse += r.mse;
        iou += r.silhouette_iou;
        ident += r.identity_mse;
    }
    const double n = static_cast<double>(report.records.size());
    report.accuracy = correct / n;
    report.mean_mse = mse / n;
    report.mean_psnr = mean_psnr_of(report.records);
    report.mean_iou = iou / n;
    report.mean_identity_mse = ident / n;
    if (recolor_total > 0)
        report.recolor_accuracy = static_cast<double>(recolor_correct) / recolor_total;
    return report;
}

EvalReport no_finetune_baseline(std::shared_ptr<const Model<float>> base_model,
                                const std::string& stage, const EvalSpec& spec,
                                const std::set<uint64_t>& training_seeds,
                                const EditTaxonomy& taxonomy) {
    if (stage != "pretrain" || base_model->lora_cfg)
        throw WrongStage("no_finetune_baseline requires a pretrain-stage checkpoint");
    EvalReport report = evaluate(model_provider(base_model), spec, training_seeds, taxonomy);
    report.baseline = true;
    return report;
}

Json to_json(const CompositionReport& r) {
    Json j;
    j["exact_set_accuracy"] = r.exact_set_accuracy;
    j["chance_product"] = r.chance_product;
    j["n_candidates"] = r.n_candidates;
    j["empty"] = r.empty;
    Json per = Json::array();
    for (const auto& e : r.per_edit)
        per.push_back(Json{{"edit", e.edit},
                           {"detected", e.detected},
                           {"total", e.total},
                           {"recall", e.recall},
                           {"ci_low", e.ci_low},
                           {"ci_high", e.ci_high}});
    j["per_edit_recall"] = per;
    Json recs = Json::array();
    for (const auto& rec : r.records) recs.push_back(record_to_json(rec));
    j["records"] = recs;
    j["provenance"] = r.provenance;
    return j;
}

std::string composition_report_csv(const CompositionReport& r) {
    std::ostringstream os;
    os << "edit,detected,total,recall,ci_low,ci_high\n";
    for (const auto& e : r.per_edit)
        os << e.edit << "," << e.detected << "," << e.total << "," << csv_num(e.recall) << ","
           << csv_num(e.ci_low) << "," << csv_num(e.ci_high) << "\n";
    os << "exact_set_accuracy," << csv_num(r.exact_set_accuracy) << ",chance_product,"
       << csv_num(r.chance_product) << ",,\n";
    return os.str();
}

CompositionReport composition_probe(const VelocityProvider& provider,
                                    const std::vector<std::vector<std::string>>& edit_groups,
                                    const EvalSpec& spec, const std::set<uint64_t>& training_seeds,
                                    const EditTaxonomy& taxonomy) {
    if (edit_groups.empty()) throw ConfigError("composition_probe: no edit groups");
    CanvasSpec canvas;
    canvas.panel_px = spec.panel_px;

    // Candidate set: every edit appearing in any group, in first-appearance
    // order. Groups must be pairwise-disjoint in touched fields.
    std::vector<std::string> candidates;
    for (const auto& group : edit_groups) {
        if (group.empty()) throw ConfigError("composition_probe: empty group");
        for (size_t i = 0; i < group.size(); ++i)
            for (size_t k = i + 1; k < group.size(); ++k)
                if (!edits_disjoint(taxonomy.find(group[i]), taxonomy.find(group[k])))
                    throw NotComposable("composition_probe: overlapping touched_fields in group");
        for (const auto& e : group) {
            taxonomy.find(e);
            if (std::find(candidates.begin(), candidates.end(), e) == candidates.end())
                candidates.push_back(e);
        }
    }

    CompositionReport report;
    report.n_candidates = static_cast<int>(candidates.size());
    report.provenance = Json{{"spec", to_json(spec)},
                             {"provider", provider.name},
                             {"groups", edit_groups},
                             {"candidates", candidates}};

    // Per-slot chance level is 1/n_candidates; the exact-set chance for a
    // group is the product over its slots. Report the most conservative
    // (largest) group value as the comparison threshold.
    report.chance_product = 0.0;
    for (const auto& group : edit_groups) {
        double p = 1.0;
        for (size_t s = 0; s < group.size(); ++s) p /= static_cast<double>(candidates.size());
        report.chance_product = std::max(report.chance_product, p);
    }

    std::map<std::string, std::vector<int>> detections;  // per candidate edit
    long exact = 0, total = 0;

    for (size_t gi = 0; gi < edit_groups.size(); ++gi) {
        const auto& group = edit_groups[gi];
        for (int q = 0; q < spec.n_queries; ++q) {
            const uint64_t ex_seed =
                mix_seed(spec.eval_seed, kTagEvalExample, 1000 + uint64_t(gi), uint64_t(q));
            const uint64_t q_seed =
                mix_seed(spec.eval_seed, kTagEvalQuery, 1000 + uint64_t(gi), uint64_t(q));
            check_leakage(ex_seed, q_seed, training_seeds);
            const uint64_t noise_seed =
                mix_seed(spec.eval_seed, kTagEvalNoise, 1000 + uint64_t(gi), uint64_t(q));
            QueryOutcome out = run_query(provider, group, ex_seed, q_seed, noise_seed, spec.steps,
                                         canvas, taxonomy);

            const Image unedited = quantized(render_sprite(out.sample.query_params, canvas));
            std::vector<std::string> predicted;
            for (const auto& cand : candidates) {
                const Image edited = oracle_target(out.sample.query_params, {cand}, canvas,
                                                   taxonomy);
                // Effect region of this candidate on this query.
                double d_edit = 0, d_plain = 0;
                long region = 0;
                for (int y = 0; y < canvas.panel_px; ++y)
                    for (int x = 0; x < canvas.panel_px; ++x) {
                        bool differ = false;
                        for (int c = 0; c < 3; ++c)
                            if (edited.at(y, x, c) != unedited.at(y, x, c)) differ = true;
                        if (!differ) continue;
                        ++region;
                        for (int c = 0; c < 3; ++c) {
                            const double ge = out.generated.at(y, x, c) - edited.at(y, x, c);
                            const double gp = out.generated.at(y, x, c) - unedited.at(y, x, c);
                            d_edit += ge * ge;
                            d_plain += gp * gp;
                        }
                    }
                if (region > 0 && d_edit < d_plain) predicted.push_back(cand);
            }

            SampleRecord rec;
            rec.sample_id = "comp_" + std::to_string(gi) + "_" + std::to_string(q);
            rec.true_edits = group;
            rec.predicted_set = predicted;
            std::vector<std::string> want = group;
            std::vector<std::string> got = predicted;
            std::sort(want.begin(), want.end());
            std::sort(got.begin(), got.end());
            rec.correct = want == got;
            const Image oracle = oracle_target(out.sample.query_params, group, canvas, taxonomy);
            rec.mse = image_mse(out.generated, oracle);
            rec.psnr = image_psnr(out.generated, oracle);
            rec.identity_mse =
                identity_region_mse(out.generated, out.sample.query_params, group, canvas,
                                    taxonomy);
            std::vector<uint8_t> oracle_mask;
            const Image o2 = render_sprite_with_mask(
                apply_edit(out.sample.query_params, compose_edits(group, taxonomy)), canvas,
                oracle_mask);
            (void)o2;
            rec.silhouette_iou = mask_iou(
                generated_silhouette(out.generated, out.sample.query_params.background_color),
                oracle_mask);
            report.records.push_back(rec);

            exact += rec.correct ? 1 : 0;
            ++total;
            for (const auto& e : group) {
                const bool hit =
                    std::find(predicted.begin(), predicted.end(), e) != predicted.end();
                detections[e].push_back(hit ? 1 : 0);
            }
        }
    }

    if (total == 0) {
        report.empty = true;
        return report;
    }
    report.exact_set_accuracy = static_cast<double>(exact) / static_cast<double>(total);
    for (const auto& cand : candidates) {
        auto it = detections.find(cand);
        if (it == detections.end()) continue;
        EditRecall er;
        er.edit = cand;
        er.total = static_cast<int>(it->second.size());
        for (int v : it->second) er.detected += v;
        er.recall = static_cast<double>(er.detected) / er.total;
        auto [lo, hi] = bootstrap_ci(it->second, spec.eval_seed ^ std::hash<std::string>{}(cand));
        er.ci_low = lo;
        er.ci_high = hi;
        report.per_edit.push_back(er);
    }
    return report;
}

std::vector<AblationCell> ablation_grid(const Model<float>& base, const AblationConfig& cfg) {
    if (cfg.n_t_values.empty() || cfg.n_c_values.empty() || cfg.seeds.empty())
        throw ConfigError("ablation_grid: empty axis");
    for (int nt : cfg.n_t_values)
        if (nt < 1 || nt > static_cast<int>(cfg.edit_order.size()))
            throw ConfigError("ablation_grid: n_t exceeds the configured edit order");

    std::vector<AblationCell> cells;
    for (int nt : cfg.n_t_values)
        for (int nc : cfg.n_c_values)
            for (uint64_t seed : cfg.seeds) {
                DatasetSpec ds;
                ds.edits.assign(cfg.edit_order.begin(), cfg.edit_order.begin() + nt);
                ds.n_c = nc;
                ds.panel_px = cfg.eval.panel_px;
                ds.global_seed = cfg.data_seed;
                const Dataset data = build_dataset(ds);

                TrainConfig tc = finetune_defaults();
                tc.iterations = cfg.finetune_iterations;
                tc.learning_rate = cfg.learning_rate;
                tc.batch_size = cfg.batch_size;
                tc.lora = cfg.lora;
                tc.seed = seed;

                TrainState st = finetune(tc, base, data);
                auto trained = std::make_shared<Model<float>>(std::move(st.model));

                AblationCell cell;
                cell.n_t = nt;
                cell.n_c = nc;
                cell.seed = seed;
                cell.report = evaluate(model_provider(trained), cfg.eval,
                                       dataset_identity_seeds(data));
                cells.push_back(std::move(cell));
            }
    return cells;
}

std::string ablation_csv(const std::vector<AblationCell>& cells) {
    std::ostringstream os;
    os << "n_t,n_c,seed,baseline,accuracy,chance,mean_mse,mean_psnr,mean_iou,mean_identity_mse,"
          "recolor_accuracy\n";
    for (const auto& c : cells)
        os << c.n_t << "," << c.n_c << "," << c.seed << "," << (c.report.baseline ? 1 : 0) << ","
           << csv_num(c.report.accuracy) << "," << csv_num(c.report.chance) << ","
           << csv_num(c.report.mean_mse) << "," << csv_num(c.report.mean_psnr) << ","
           << csv_num(c.report.mean_iou) << "," << csv_num(c.report.mean_identity_mse) << ","
           << (c.report.recolor_accuracy ? csv_num(*c.report.recolor_accuracy) : "na") << "\n";
    return os.str();
}

Image contact_sheet(const std::vector<std::pair<CompositeSample, Image>>& rows,
                    const CanvasSpec& canvas, int max_rows) {
    const int n = std::min<int>(max_rows, static_cast<int>(rows.size()));
    const int p = canvas.panel_px;
    if (n == 0) return Image(5 * p, p);
    Image sheet(5 * p, n * p);
    for (int i = 0; i < n; ++i) {
        const auto& [sample, generated] = rows[static_cast<size_t>(i)];
        const Image oracle =
            oracle_target(sample.query_params, sample.edit_names, canvas, default_taxonomy());
        blit(sheet, sample.bottom_source, i * p, 0);
        blit(sheet, sample.top_source, i * p, p);
        blit(sheet, sample.top_target, i * p, 2 * p);
        blit(sheet, generated, i * p, 3 * p);
        blit(sheet, oracle, i * p, 4 * p);
    }
    return sheet;
}

}  // namespace etlab
