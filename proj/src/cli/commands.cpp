#include "cli/commands.hpp"

#include "cli/csv.hpp"
#include "eptest/calib.hpp"
#include "eptest/constructors.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "CLI11.hpp"
#include "json.hpp"

namespace eptest::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sibling_path(const std::string& output, const std::string& suffix) {
    fs::path p(output);
    p.replace_extension(suffix);
    return p.string();
}

namespace {

class UsageError : public Error {
public:
    using Error::Error;
};

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError(0, "cannot open input file '" + path + "'");
    return in;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot open output file '" + path + "'");
    return out;
}

// Runs body and maps exceptions onto exit codes.
int guarded(std::ostream& err, const std::function<int()>& body) {
    try {
        return body();
    } catch (const InputError& ex) {
        err << "input error: " << ex.what() << '\n';
        return kExitInput;
    } catch (const ConfigError& ex) {
        err << "config error: " << ex.what() << '\n';
        return kExitInput;
    } catch (const UsageError& ex) {
        err << "usage error: " << ex.what() << '\n';
        return kExitUsage;
    } catch (const BadParameter& ex) {
        err << "usage error: " << ex.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitInput;
    }
}

std::size_t require_column(const CsvTable& table, std::string_view name) {
    if (auto c = table.column(name)) return *c;
    throw InputError(1, "header is missing column '" + std::string(name) + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// adjust
// ---------------------------------------------------------------------------

int cmd_adjust(const AdjustRequest& req, std::ostream& err) {
    return guarded(err, [&] {
        const auto proc = parse_procedure(req.procedure);
        if (!proc) throw UsageError("unknown procedure '" + req.procedure + "'");
        check_alpha(req.alpha);
        if (!(req.tau > 0.0 && req.tau < 1.0)) throw UsageError("--tau must lie in (0, 1)");
        if (!(req.lambda_shift >= 0.0 && req.lambda_shift <= 1.0))
            throw UsageError("--lambda-shift must lie in [0, 1]");
        if (req.output.empty()) throw UsageError("--out is required");

        ProcedureConfig cfg;
        cfg.alpha = req.alpha;
        cfg.tau = req.tau;
        cfg.calibrator = parse_calibrator(req.calibrator);

        auto in = open_input(req.input);
        const auto table = read_csv(in);
        const auto id_col = require_column(table, "id");
        const auto p_col = table.column("p");
        const auto e_col = table.column("e");
        if (!p_col && !e_col) throw InputError(1, "header needs a 'p' or an 'e' column");
        if (table.rows.empty()) throw InputError(1, "no hypotheses in input");

        std::vector<HypothesisRecord> records;
        records.reserve(table.rows.size());
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
            const auto& row = table.rows[i];
            const auto line = table.line_numbers[i];
            HypothesisRecord rec;
            rec.id = row[id_col];
            if (p_col) rec.p = parse_real_cell(row[*p_col], line, "p");
            if (e_col) rec.e = parse_real_cell(row[*e_col], line, "e");
            if (rec.p && (std::isnan(*rec.p) || *rec.p < 0.0 || *rec.p > 1.0))
                throw InputError(line, "p-value must lie in [0, 1]");
            if (rec.e && (std::isnan(*rec.e) || *rec.e < 0.0))
                throw InputError(line, "e-value must lie in [0, inf]");
            if (!rec.p && !rec.e) throw InputError(line, "row has neither p nor e");
            if (!rec.p && uses_pvalues(*proc))
                throw InputError(line, "procedure " + req.procedure + " needs a p-value on every row");
            records.push_back(std::move(rec));
        }

        auto inputs = validate_inputs(records);
        if (req.lambda_shift > 0.0)
            for (auto& e : inputs.e) e = shift_evalue(EValue(e), req.lambda_shift).value();

        const auto result = run_procedure(*proc, inputs.p, inputs.e, cfg);
        for (const auto& w : result.warnings) err << "warning: " << w << '\n';

        const auto mask = result.mask(inputs.K);
        auto out = open_output(req.output);
        out << "id,p,e,adjusted,rejected\n";
        for (std::size_t i = 0; i < inputs.K; ++i) {
            out << records[i].id << ',' << (records[i].p ? format_real(inputs.p[i]) : std::string()) << ','
                << format_real(inputs.e[i]) << ',' << format_real(result.adjusted[i]) << ','
                << (mask[i] ? 1 : 0) << '\n';
        }

        json summary = {
            {"procedure", req.procedure},
            {"alpha", req.alpha},
            {"k_star", result.threshold_index},
            {"n_rejected", result.rejected.size()},
            {"K", inputs.K},
            {"tau", req.tau},
            {"calibrator", cfg.calibrator.name()},
            {"lambda_shift", req.lambda_shift},
            {"warnings", result.warnings},
        };
        auto summary_out = open_output(sibling_path(req.output, ".summary.json"));
        summary_out << summary.dump(2) << '\n';
        return kExitOk;
    });
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto t = trim(item);
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size())
        throw ConfigError(key, "cannot parse '" + value + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError(key, "expected a boolean, got '" + value + "'");
}

template <typename Scn>
using Setter = std::function<void(Scn&, const std::string& key, const std::string& value)>;

template <typename Scn, typename Field>
Setter<Scn> field_setter(Field Scn::*member) {
    return [member](Scn& s, const std::string& key, const std::string& value) {
        if constexpr (std::is_same_v<Field, bool>)
            s.*member = parse_bool(key, value);
        else if constexpr (std::is_same_v<Field, std::optional<double>>)
            s.*member = parse_number<double>(key, value);
        else
            s.*member = parse_number<Field>(key, value);
    };
}

template <typename Scn>
const std::map<std::string, Setter<Scn>>& setters();

template <>
const std::map<std::string, Setter<TTestScenario>>& setters<TTestScenario>() {
    static const std::map<std::string, Setter<TTestScenario>> m{
        {"K", field_setter(&TTestScenario::K)},
        {"null_fraction", field_setter(&TTestScenario::null_fraction)},
        {"xi", field_setter(&TTestScenario::xi)},
        {"n_per_group", field_setter(&TTestScenario::n_per_group)},
        {"df_ssq", field_setter(&TTestScenario::df_ssq)},
        {"ncp", field_setter(&TTestScenario::ncp)},
        {"null_e_scale", field_setter(&TTestScenario::null_e_scale)},
    };
    return m;
}

template <>
const std::map<std::string, Setter<MicroarrayScenario>>& setters<MicroarrayScenario>() {
    static const std::map<std::string, Setter<MicroarrayScenario>> m{
        {"K", field_setter(&MicroarrayScenario::K)},
        {"null_fraction", field_setter(&MicroarrayScenario::null_fraction)},
        {"xi", field_setter(&MicroarrayScenario::xi)},
        {"pi_M", field_setter(&MicroarrayScenario::pi_M)},
        {"nu0", field_setter(&MicroarrayScenario::nu0)},
        {"s0_sq", field_setter(&MicroarrayScenario::s0_sq)},
        {"effect_var_ratio", field_setter(&MicroarrayScenario::effect_var_ratio)},
        {"n_per_group", field_setter(&MicroarrayScenario::n_per_group)},
        {"pvalue_arm_power", field_setter(&MicroarrayScenario::pvalue_arm_power)},
        {"calibration_alpha", field_setter(&MicroarrayScenario::calibration_alpha)},
        {"fix_hyperparameters", field_setter(&MicroarrayScenario::fix_hyperparameters)},
    };
    return m;
}

template <>
const std::map<std::string, Setter<AdversarialScenario>>& setters<AdversarialScenario>() {
    static const std::map<std::string, Setter<AdversarialScenario>> m{
        {"K", field_setter(&AdversarialScenario::K)},
        {"level", field_setter(&AdversarialScenario::level)},
    };
    return m;
}

// Expands comma-separated values into the cartesian product of scenarios.
template <typename Scn>
void expand_section(const std::string& section, const boost::property_tree::ptree& tree,
                    std::vector<Scenario>& out) {
    const auto& table = setters<Scn>();
    std::vector<std::pair<std::string, std::vector<std::string>>> entries;
    for (const auto& [key, node] : tree) {
        const std::string full_key = section + "." + key;
        if (!table.contains(key)) throw ConfigError(full_key, "unknown key");
        auto values = split_list(node.data());
        if (values.empty()) throw ConfigError(full_key, "empty value");
        entries.emplace_back(key, std::move(values));
    }

    std::vector<std::size_t> pos(entries.size(), 0);
    for (;;) {
        Scn scn;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const auto& [key, values] = entries[i];
            table.at(key)(scn, section + "." + key, values[pos[i]]);
        }
        try {
            scn.validate();
        } catch (const BadParameter& ex) {
            throw ConfigError(section, ex.what());
        }
        out.emplace_back(scn);

        std::size_t i = entries.size();
        while (i > 0) {
            --i;
            if (++pos[i] < entries[i].second.size()) break;
            pos[i] = 0;
            if (i == 0) return;
        }
        if (entries.empty()) return;
    }
}

}  // namespace

CampaignSpec load_campaign_spec(const std::string& path) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(path, tree);
    } catch (const boost::property_tree::ini_parser_error& ex) {
        throw ConfigError("<file>", ex.what());
    }

    CampaignSpec spec;
    bool have_procedures = false;
    for (const auto& [section, node] : tree) {
        const auto type = section.substr(0, section.find('.'));
        if (section == "campaign") {
            for (const auto& [key, value_node] : node) {
                const std::string full_key = "campaign." + key;
                const auto value = trim(value_node.get_value<std::string>());
                if (key == "procedures") {
                    for (const auto& name : split_list(value)) {
                        const auto proc = parse_procedure(name);
                        if (!proc) throw ConfigError(full_key, "unknown procedure '" + name + "'");
                        spec.procedures.push_back(*proc);
                    }
                    have_procedures = true;
                } else if (key == "alpha") {
                    spec.config.procedure.alpha = parse_number<double>(full_key, value);
                } else if (key == "tau") {
                    spec.config.procedure.tau = parse_number<double>(full_key, value);
                } else if (key == "calibrator") {
                    try {
                        spec.config.procedure.calibrator = parse_calibrator(value);
                    } catch (const BadParameter& ex) {
                        throw ConfigError(full_key, ex.what());
                    }
                } else if (key == "merging") {
                    if (value == "mean")
                        spec.config.procedure.merging = EMerging::ArithmeticMean;
                    else if (value == "simes")
                        spec.config.procedure.merging = EMerging::SimesMax;
                    else
                        throw ConfigError(full_key, "expected mean or simes");
                } else if (key == "replicates") {
                    spec.config.replicates = parse_number<std::size_t>(full_key, value);
                } else if (key == "seed") {
                    spec.config.master_seed = parse_number<std::uint64_t>(full_key, value);
                } else if (key == "parallelism") {
                    spec.config.parallelism = parse_number<std::size_t>(full_key, value);
                } else {
                    throw ConfigError(full_key, "unknown key");
                }
            }
        } else if (type == "ttest") {
            expand_section<TTestScenario>(section, node, spec.scenarios);
        } else if (type == "microarray") {
            expand_section<MicroarrayScenario>(section, node, spec.scenarios);
        } else if (type == "adversarial") {
            expand_section<AdversarialScenario>(section, node, spec.scenarios);
        } else {
            throw ConfigError(section, "unknown section (expected campaign, ttest, microarray or adversarial)");
        }
    }
    if (!have_procedures || spec.procedures.empty()) throw ConfigError("campaign.procedures", "missing");
    if (spec.scenarios.empty()) throw ConfigError("<scenarios>", "config defines no scenario section");
    const double alpha = spec.config.procedure.alpha;
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("campaign.alpha", "must lie in (0, 1)");
    const double tau = spec.config.procedure.tau;
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("campaign.tau", "must lie in (0, 1)");
    return spec;
}

int cmd_simulate(const SimulateRequest& req, std::ostream& err) {
    return guarded(err, [&] {
        if (req.output.empty()) throw UsageError("--out is required");
        if (req.reps && *req.reps == 0) throw UsageError("--reps must be >= 1");
        if (req.parallelism && *req.parallelism == 0) throw UsageError("--parallelism must be >= 1");

        auto spec = load_campaign_spec(req.config);
        if (req.reps) spec.config.replicates = *req.reps;
        if (req.seed) spec.config.master_seed = *req.seed;
        if (req.parallelism) spec.config.parallelism = *req.parallelism;
        if (spec.config.replicates == 0) throw ConfigError("campaign.replicates", "must be >= 1");

        const auto result = run_campaign(spec.scenarios, spec.procedures, spec.config);

        auto out = open_output(req.output);
        out << campaign_csv(result, spec.config.procedure.alpha);

        json manifest;
        manifest["tool"] = "eptest";
        manifest["version"] = kVersion;
        manifest["master_seed"] = spec.config.master_seed;
        manifest["seed_scheme"] = "splitmix64(splitmix64(splitmix64(master) ^ scenario) ^ replicate)";
        manifest["replicates"] = spec.config.replicates;
        manifest["parallelism"] = spec.config.parallelism;
        manifest["alpha"] = spec.config.procedure.alpha;
        manifest["tau"] = spec.config.procedure.tau;
        manifest["calibrator"] = spec.config.procedure.calibrator.name();
        manifest["wall_seconds"] = result.wall_seconds;
        json procs = json::array();
        for (auto p : spec.procedures) procs.push_back(std::string(procedure_name(p)));
        manifest["procedures"] = procs;
        json scns = json::array();
        for (std::size_t s = 0; s < result.scenarios.size(); ++s) {
            const auto& a = result.audits[s];
            scns.push_back({
                {"index", s},
                {"scenario", scenario_label(result.scenarios[s])},
                {"audit",
                 {{"null_e_mean", a.null_e_mean},
                  {"null_e_se", a.null_e_se},
                  {"null_e_ok", a.e_ok},
                  {"null_p_ks", a.null_p_ks},
                  {"null_p_ks_threshold", a.ks_threshold},
                  {"null_p_ok", a.p_ok},
                  {"null_count", a.null_count}}},
            });
            if (!a.e_ok || !a.p_ok)
                err << "warning: null-validity audit flagged scenario " << s << " ("
                    << scenario_label(result.scenarios[s]) << ")\n";
        }
        manifest["scenarios"] = scns;
        auto man_out = open_output(sibling_path(req.output, ".manifest.json"));
        man_out << manifest.dump(2) << '\n';
        return kExitOk;
    });
}

// ---------------------------------------------------------------------------
// combine
// ---------------------------------------------------------------------------

namespace {

int combine_pe(const CombineRequest& req, const CsvTable& table) {
    const bool needs_calibrator = req.mode == "product" || req.mode == "mean";
    if (needs_calibrator && !req.calibrator)
        throw UsageError("--mode " + req.mode + " requires --calibrator");
    if (req.mode == "mean" && !(req.lambda > 0.0 && req.lambda < 1.0))
        throw UsageError("--lambda must lie in (0, 1)");
    const auto h = needs_calibrator ? parse_calibrator(*req.calibrator) : Calibrator::sqrt_minus_one();

    const auto id_col = require_column(table, "id");
    const auto p_col = require_column(table, "p");
    const auto e_col = table.column("e");

    auto out = open_output(req.output);
    out << "id,combined\n";
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const auto line = table.line_numbers[i];
        const auto p_raw = parse_real_cell(row[p_col], line, "p");
        if (!p_raw) throw InputError(line, "missing p-value");
        const auto e_raw = e_col ? parse_real_cell(row[*e_col], line, "e") : std::nullopt;
        double combined = 0.0;
        try {
            const PValue p(*p_raw);
            const EValue e(e_raw.value_or(1.0));
            if (req.mode == "quotient")
                combined = combine_quotient(p, e).value();
            else if (req.mode == "product")
                combined = combine_product(h, p, e).value();
            else if (req.mode == "mean")
                combined = combine_mean(h, req.lambda, p, e).value();
            else
                combined = combine_bonferroni(p, e).value();
        } catch (const MalformedValue& ex) {
            throw InputError(line, ex.what());
        }
        out << row[id_col] << ',' << format_real(combined) << '\n';
    }
    return kExitOk;
}

int combine_moderated_t(const CombineRequest& req, const CsvTable& table) {
    const auto id_col = require_column(table, "id");
    const auto b_col = require_column(table, "beta_hat");
    const auto s_col = require_column(table, "s_sq");
    const auto v_col = require_column(table, "v");
    const auto nu_col = require_column(table, "nu");
    const std::size_t K = table.rows.size();
    if (K < 2) throw InputError(1, "moderated-t mode needs at least two rows");

    std::vector<double> beta(K), s_sq(K), v(K), nu(K);
    for (std::size_t i = 0; i < K; ++i) {
        const auto& row = table.rows[i];
        const auto line = table.line_numbers[i];
        auto get = [&](std::size_t col, const char* name) {
            const auto x = parse_real_cell(row[col], line, name);
            if (!x || !std::isfinite(*x)) throw InputError(line, std::string("missing or non-finite ") + name);
            return *x;
        };
        beta[i] = get(b_col, "beta_hat");
        s_sq[i] = get(s_col, "s_sq");
        v[i] = get(v_col, "v");
        nu[i] = get(nu_col, "nu");
        if (s_sq[i] < 0.0) throw InputError(line, "s_sq must be >= 0");
        if (v[i] <= 0.0 || nu[i] <= 0.0) throw InputError(line, "v and nu must be > 0");
    }

    const auto prior = fit_limma_hyperparameters(s_sq, nu);
    std::vector<double> t(K), p(K);
    for (std::size_t i = 0; i < K; ++i) {
        const ModeratedTModel m{v[i], nu[i], prior.nu0, prior.s0_sq, 0.0};
        const auto mt = moderated_t(beta[i], s_sq[i], m);
        t[i] = mt.t_tilde;
        p[i] = mt.p.value();
    }
    const auto gfit = fit_gamma(t, v, nu, prior.nu0);

    auto out = open_output(req.output);
    out << "id,t_tilde,p,e\n";
    for (std::size_t i = 0; i < K; ++i) {
        const ModeratedTModel m{v[i], nu[i], prior.nu0, prior.s0_sq, gfit.gamma};
        out << table.rows[i][id_col] << ',' << format_real(t[i]) << ',' << format_real(p[i]) << ','
            << format_real(moderated_t_evalue(t[i], m).value()) << '\n';
    }
    return kExitOk;
}

}  // namespace

int cmd_combine(const CombineRequest& req, std::ostream& err) {
    return guarded(err, [&] {
        static const std::vector<std::string> modes{"quotient", "product", "mean", "bonferroni", "moderated-t"};
        if (std::find(modes.begin(), modes.end(), req.mode) == modes.end())
            throw UsageError("unknown --mode '" + req.mode + "'");
        if (req.output.empty()) throw UsageError("--out is required");
        auto in = open_input(req.input);
        const auto table = read_csv(in);
        if (req.mode == "moderated-t") return combine_moderated_t(req, table);
        return combine_pe(req, table);
    });
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------

int run_cli(int argc, char** argv) {
    CLI::App app{"eptest: multiple testing with p-values and e-values"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    AdjustRequest adjust;
    auto* adj = app.add_subcommand("adjust", "run a multiple testing procedure on an id,p,e CSV");
    adj->add_option("--input,input", adjust.input, "input CSV with header id,p,e")->required();
    adj->add_option("--procedure", adjust.procedure,
                    "p-bh | p-bh-by | e-bh | wbh-normalized | ep-bh | pe-bh | ep-storey | ep-bonferroni | "
                    "adaptive-e-bh | storey-bh | wstorey-normalized");
    adj->add_option("--alpha", adjust.alpha, "target level in (0, 1)");
    adj->add_option("--tau", adjust.tau, "Storey threshold in (0, 1)");
    adj->add_option("--calibrator", adjust.calibrator, "sqrt | kappa:<value>");
    adj->add_option("--lambda-shift", adjust.lambda_shift, "replace e by lambda + (1 - lambda) e");
    adj->add_option("--out", adjust.output, "output CSV")->required();

    SimulateRequest simulate;
    auto* sim = app.add_subcommand("simulate", "run a Monte-Carlo campaign from a config file");
    sim->add_option("--config,config", simulate.config, "INI campaign description")->required();
    sim->add_option("--reps", simulate.reps, "replicates per scenario");
    sim->add_option("--seed", simulate.seed, "master seed");
    sim->add_option("--parallelism", simulate.parallelism, "worker threads");
    sim->add_option("--out", simulate.output, "output CSV")->required();

    CombineRequest combine;
    auto* comb = app.add_subcommand("combine", "merge a p-value and an e-value per row, or build moderated-t e-values");
    comb->add_option("--input,input", combine.input, "input CSV")->required();
    comb->add_option("--mode", combine.mode, "quotient | product | mean | bonferroni | moderated-t")->required();
    comb->add_option("--calibrator", combine.calibrator, "sqrt | kappa:<value>");
    comb->add_option("--lambda", combine.lambda, "weight of h(p) in mean mode");
    comb->add_option("--out", combine.output, "output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (*adj) return cmd_adjust(adjust, std::cerr);
    if (*sim) return cmd_simulate(simulate, std::cerr);
    if (*comb) return cmd_combine(combine, std::cerr);
    return kExitUsage;
}

}  // namespace eptest::cli
