// dqo: command-line front end to the questionnaire engine.

#include "dqo/bundle.hpp"
#include "dqo/harness.hpp"
#include "dqo/service.hpp"
#include "dqo/synthetic.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <numeric>
#include <vector>

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty())
            out.push_back(item);
    return out;
}

std::vector<double> parse_lambdas(const std::string& s)
{
    std::vector<double> out;
    for (const auto& item : split_list(s)) {
        double v = 0;
        if (!dqo::csv::parse_double(item, v) || v < 0)
            throw CLI::ValidationError("--lambda", "'" + item + "' is not a non-negative number");
        out.push_back(v);
    }
    if (out.empty())
        throw CLI::ValidationError("--lambda", "no values given");
    return out;
}

std::ofstream open_out(const fs::path& p)
{
    if (p.has_parent_path())
        fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + p.string());
    return out;
}

httplib::Server* g_server = nullptr;

void handle_signal(int)
{
    if (g_server)
        g_server->stop();
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Dynamic question ordering for cost-aware sequential prediction"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    // train
    auto* train = app.add_subcommand("train", "Select features, fit the model and write a model bundle");
    std::string data_path, meta_path, model_out, test_out;
    double test_fraction = 0.0;
    std::uint64_t split_seed = 1;
    dqo::TrainOptions topt;
    bool no_select = false;
    std::string width_form = "weighted_variance";
    train->add_option("--data", data_path, "Training CSV")->required()->check(CLI::ExistingFile);
    train->add_option("--meta", meta_path, "Metadata JSON sidecar")->required()->check(CLI::ExistingFile);
    train->add_option("--out", model_out, "Model bundle to write")->required();
    train->add_option("--test-fraction", test_fraction, "Hold out this fraction of rows before training")
        ->check(CLI::Range(0.0, 1.0));
    train->add_option("--test-out", test_out, "Where to write held-out rows (with --test-fraction)");
    train->add_option("--seed", split_seed, "Seed for the hold-out split");
    train->add_option("--k", topt.k, "Neighbours for imputation")->capture_default_str();
    train->add_option("--max-features", topt.max_features, "Forward-selection limit")->capture_default_str();
    train->add_option("--min-improvement", topt.min_improvement, "Forward-selection stopping threshold")
        ->capture_default_str();
    train->add_option("--max-levels", topt.max_levels, "Outcome bins for continuous features")->capture_default_str();
    train->add_option("--alpha", topt.alpha, "Interval significance level")->capture_default_str();
    train->add_option("--width-form", width_form, "weighted_variance | weighted_width")->capture_default_str();
    train->add_flag("--no-select", no_select, "Keep every feature instead of running forward selection");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Simulate question answering on test rows");
    std::string model_path, test_path, orderers_arg = "dqo,random", lambda_arg = "0", out_dir;
    double alpha = dqo::kDefaultAlpha;
    std::uint64_t sim_seed = 1;
    std::size_t max_rows = 0;
    sim->add_option("--model", model_path, "Model bundle")->required()->check(CLI::ExistingFile);
    sim->add_option("--test", test_path, "Test CSV with the model's feature columns and target")
        ->required()
        ->check(CLI::ExistingFile);
    sim->add_option("--orderers", orderers_arg,
                    "Comma list of dqo, dqo_weighted_width, random, fixed_decreasing, fixed_selection, oracle")
        ->capture_default_str();
    sim->add_option("--lambda", lambda_arg, "Comma list of cost tradeoffs")->capture_default_str();
    sim->add_option("--alpha", alpha, "Interval significance level")->capture_default_str();
    sim->add_option("--seed", sim_seed, "Seed for the random orderer")->capture_default_str();
    sim->add_option("--rows", max_rows, "Only simulate the first N test rows (0 = all)");
    sim->add_option("--out", out_dir, "Output directory")->required();

    // report
    auto* rep = app.add_subcommand("report", "Summarise trajectory files as mean AUCs");
    std::string runs_dir, report_out, positions_out, positions_orderer = "oracle";
    double positions_lambda = 0.0;
    rep->add_option("runs", runs_dir, "Directory of trajectory CSVs")->required()->check(CLI::ExistingDirectory);
    rep->add_option("--out", report_out, "Summary CSV")->required();
    rep->add_option("--positions", positions_out, "Also write position frequencies of one orderer");
    rep->add_option("--positions-orderer", positions_orderer, "Orderer for --positions")->capture_default_str();
    rep->add_option("--positions-lambda", positions_lambda, "Lambda for --positions")->capture_default_str();

    // serve
    auto* serve = app.add_subcommand("serve", "Run the survey session HTTP service");
    std::vector<std::string> serve_models;
    std::string host = "127.0.0.1";
    int port = 8080;
    long ttl = 3600;
    serve->add_option("--model", serve_models, "Model bundle(s); the id is the file stem")
        ->required()
        ->check(CLI::ExistingFile);
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->capture_default_str();
    serve->add_option("--ttl", ttl, "Session lifetime in seconds")->capture_default_str();

    // synth
    auto* syn = app.add_subcommand("synth", "Generate a synthetic benchmark dataset");
    dqo::SyntheticConfig scfg = dqo::benchmark_config(1);
    std::uint64_t syn_seed = 1;
    std::string syn_out, syn_meta;
    syn->add_option("--n", scfg.n, "Rows")->capture_default_str();
    syn->add_option("--d", scfg.d, "Features")->capture_default_str();
    syn->add_option("--noise-sd", scfg.noise_sd, "Target noise standard deviation")->capture_default_str();
    syn->add_option("--free", scfg.n_free, "Number of free features")->capture_default_str();
    syn->add_option("--seed", syn_seed, "Seed for the generating model and rows")->capture_default_str();
    syn->add_option("--out", syn_out, "CSV to write")->required();
    syn->add_option("--meta-out", syn_meta, "Metadata to write (default: <out> with a .meta extension)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            auto table = dqo::load_dataset(data_path, meta_path);
            if (test_fraction > 0.0) {
                if (test_out.empty())
                    throw CLI::ValidationError("--test-out", "required with --test-fraction");
                auto [tr, te] = dqo::split_train_test(table, test_fraction, split_seed);
                auto out = open_out(test_out);
                dqo::write_dataset_csv(te, out);
                table = std::move(tr);
            }
            topt.select = !no_select;
            topt.width_form = dqo::parse_width_form(width_form);
            std::vector<std::string> warnings;
            const auto model = dqo::train_model(table, topt, &warnings);
            for (const auto& w : warnings)
                std::cerr << "warning: " << w << "\n";
            dqo::save_bundle(model, model_out);
            std::cout << "trained on " << table.rows() << " rows, " << model.dims() << " model features ("
                      << model.free_set().size() << " free)" << (model.model.regularized ? ", regularized" : "")
                      << "\nwrote " << model_out << "\n";
        } else if (*sim) {
            const auto model = dqo::load_bundle(model_path);
            auto test = dqo::load_dataset(test_path, dqo::bundle_metadata(model), false);
            if (max_rows && max_rows < test.rows()) {
                std::vector<std::size_t> first(max_rows);
                std::iota(first.begin(), first.end(), 0);
                test = test.select_rows(first);
            }
            std::vector<std::unique_ptr<dqo::Orderer>> owned;
            std::vector<const dqo::Orderer*> orderers;
            for (const auto& name : split_list(orderers_arg)) {
                owned.push_back(dqo::make_orderer(name, model, sim_seed));
                orderers.push_back(owned.back().get());
            }
            const auto lambdas = parse_lambdas(lambda_arg);
            const auto trajs = dqo::simulate(test, model, orderers, lambdas, alpha);
            fs::create_directories(out_dir);
            for (const auto* ord : orderers)
                for (double lambda : lambdas) {
                    std::vector<dqo::Trajectory> subset;
                    for (const auto& t : trajs)
                        if (t.orderer == ord->name() && t.lambda == lambda)
                            subset.push_back(t);
                    const auto path = fs::path(out_dir) / dqo::trajectory_file_name(ord->name(), lambda);
                    auto out = open_out(path);
                    dqo::write_trajectories(out, subset);
                    std::cout << "wrote " << path.string() << " (" << subset.size() << " rows)\n";
                }
        } else if (*rep) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(runs_dir))
                if (e.is_regular_file() && e.path().extension() == ".csv")
                    files.push_back(e.path());
            std::sort(files.begin(), files.end());
            std::vector<dqo::Trajectory> all;
            for (const auto& f : files) {
                auto t = dqo::read_trajectories(f.string());
                all.insert(all.end(), t.begin(), t.end());
            }
            if (all.empty())
                throw std::runtime_error("no trajectories found in " + runs_dir);
            auto out = open_out(report_out);
            dqo::write_summary(out, dqo::summarize(all));
            std::cout << "wrote " << report_out << "\n";
            if (!positions_out.empty()) {
                std::vector<dqo::Trajectory> chosen;
                std::vector<std::string> names;
                for (const auto& t : all) {
                    if (t.orderer != positions_orderer || t.lambda != positions_lambda)
                        continue;
                    chosen.push_back(t);
                    for (std::size_t q = 1; q < t.steps.size(); ++q)
                        if (std::find(names.begin(), names.end(), t.steps[q].asked_feature) == names.end())
                            names.push_back(t.steps[q].asked_feature);
                }
                if (chosen.empty())
                    throw std::runtime_error("no '" + positions_orderer + "' trajectories at that lambda to count");
                std::sort(names.begin(), names.end());
                auto pout = open_out(positions_out);
                dqo::write_positions(pout, dqo::oracle_position_frequencies(chosen, names), names);
                std::cout << "wrote " << positions_out << "\n";
            }
        } else if (*serve) {
            dqo::SurveyService service{std::chrono::seconds(ttl)};
            for (const auto& p : serve_models) {
                service.add_model(fs::path(p).stem().string(),
                                  std::make_shared<const dqo::DqoModel>(dqo::load_bundle(p)));
                std::cout << "loaded model '" << fs::path(p).stem().string() << "'\n";
            }
            httplib::Server server;
            service.mount(server);
            g_server = &server;
            std::signal(SIGINT, handle_signal);
            std::signal(SIGTERM, handle_signal);
            std::cout << "listening on http://" << host << ":" << port << std::endl;
            if (!server.listen(host, port))
                throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
        } else if (*syn) {
            scfg.seed = syn_seed;
            scfg.structure_seed = syn_seed;
            const auto data = dqo::generate_synthetic(scfg);
            if (syn_meta.empty())
                syn_meta = fs::path(syn_out).replace_extension(".meta").string();
            if (fs::path(syn_out).has_parent_path())
                fs::create_directories(fs::path(syn_out).parent_path());
            dqo::save_dataset(data.table, syn_out, syn_meta);
            std::cout << "wrote " << syn_out << " and " << syn_meta << "\n";
        }
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const dqo::LoadError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
