#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <sstream>

#include "kacdiff/bounds.hpp"
#include "kacdiff/commands.hpp"
#include "kacdiff/config.hpp"
#include "kacdiff/errors.hpp"
#include "kacdiff/expression.hpp"
#include "kacdiff/io.hpp"
#include "kacdiff/kac_moments.hpp"
#include "kacdiff/simulator.hpp"

namespace py = pybind11;
using namespace kacdiff;

namespace {

// Test functions come in as an expression string in x or an (lo, hi) pair
// meaning the indicator of [lo, hi]. Python callables are not accepted: the
// simulator calls f from worker threads.
RealFunction to_function(const py::object& f) {
    if (py::isinstance<py::str>(f)) {
        const auto e = Expression::parse(f.cast<std::string>());
        return [e](double x) { return e(x); };
    }
    const auto [lo, hi] = f.cast<std::pair<double, double>>();
    if (!(lo < hi)) throw DomainError("indicator needs lo < hi");
    return [lo, hi](double x) { return x >= lo && x <= hi ? 1.0 : 0.0; };
}

MomentTarget to_side(const std::string& side) {
    if (side == "from_above") return MomentTarget::FromAbove;
    if (side == "from_below") return MomentTarget::FromBelow;
    throw DomainError("side must be 'from_above' or 'from_below'");
}

SimConfig sim_config(double h, double horizon, std::size_t replicas, std::uint64_t seed, unsigned threads) {
    SimConfig cfg;
    cfg.h = h;
    cfg.horizon = horizon;
    cfg.replicas = replicas;
    cfg.seed = seed;
    cfg.threads = threads;
    return cfg;
}

py::dict table_dict(const MomentTable& t) {
    py::dict d;
    d["x"] = t.x_grid;
    d["values"] = t.values;
    d["side"] = to_string(t.target);
    d["a"] = t.a;
    d["b"] = t.b;
    d["horizon"] = t.horizon;
    d["tail_exponent"] = t.tail_exponent;
    std::ostringstream os;
    t.write_csv(os);
    d["csv"] = os.str();
    return d;
}

py::dict estimate_dict(const Estimate& e) {
    py::dict d;
    d["value"] = e.value;
    d["std_error"] = e.std_error;
    return d;
}

AssumptionParams assumption_params(double M0, std::optional<RestoringFloor> floor,
                                   std::optional<RestoringCeiling> ceiling) {
    AssumptionParams ap;
    ap.M0 = M0;
    ap.floor = floor;
    ap.ceiling = ceiling;
    ap.validate();
    return ap;
}

CommandOutcome run_command(const std::string& command, const std::string& config, std::optional<std::string> out,
                           std::optional<std::uint64_t> seed, std::optional<std::size_t> replicas, unsigned threads) {
    if (command == "selftest") return cmd_selftest(threads);
    ExperimentConfig cfg = load_experiment(config);
    if (out) cfg.override_out_dir(*out);
    if (seed) cfg.override_seed(*seed);
    if (replicas) cfg.override_replicas(*replicas);
    cfg.override_threads(threads);
    if (command == "model") return cmd_model(cfg);
    if (command == "moments") return cmd_moments(cfg);
    if (command == "deviation") return cmd_deviation(cfg);
    throw ConfigError("unknown command '" + command + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Hitting-time moments, moment bounds and regenerative Monte Carlo for 1-d diffusions";
    m.attr("__version__") = std::string(version());

    auto base = py::register_exception<Error>(m, "KacdiffError", PyExc_RuntimeError);
    py::register_exception<DomainError>(m, "DomainError", base.ptr());
    py::register_exception<RangeError>(m, "RangeError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<NotPositiveRecurrent>(m, "NotPositiveRecurrent", base.ptr());
    py::register_exception<NumericalBlowup>(m, "NumericalBlowup", base.ptr());
    py::register_exception<ExcessCensoring>(m, "ExcessCensoring", base.ptr());

    py::class_<DiffusionModel>(m, "Model")
        .def_static("brownian", [] { return DiffusionModel(DiffusionSpec::brownian()); })
        .def_static("ou", [](double theta) { return DiffusionModel(DiffusionSpec::ornstein_uhlenbeck(theta)); },
                    py::arg("theta") = 1.0)
        .def_static("bounded_drift", [](double theta) { return DiffusionModel(DiffusionSpec::bounded_drift(theta)); },
                    py::arg("theta") = 1.0)
        .def_static(
            "custom",
            [](const std::string& drift, const std::string& diffusion, std::map<std::string, double> constants) {
                ModelConfig mc;
                mc.drift = drift;
                mc.diffusion = diffusion;
                mc.constants.insert(constants.begin(), constants.end());
                return DiffusionModel(mc.spec());
            },
            py::arg("drift"), py::arg("diffusion"), py::arg("constants") = std::map<std::string, double>{})
        .def_property_readonly("description", [](const DiffusionModel& d) { return d.spec().description; })
        .def("drift", &DiffusionModel::drift)
        .def("diffusion", &DiffusionModel::diffusion)
        .def("scale_density", &DiffusionModel::scale_density)
        .def("scale_function", &DiffusionModel::scale_function)
        .def("speed_density", &DiffusionModel::speed_density)
        .def("__repr__", [](const DiffusionModel& d) { return "Model(" + d.spec().description + ")"; });

    m.def(
        "classify",
        [](const DiffusionModel& model, double probe_limit) {
            const auto r = classify_recurrence(model, probe_limit);
            py::dict d;
            d["kind"] = to_string(r.kind);
            d["speed_mass"] = r.speed_mass;
            d["summary"] = r.summary();
            return d;
        },
        py::arg("model"), py::arg("probe_limit") = 1e6);

    m.def(
        "invariant_probability",
        [](const DiffusionModel& model, double lo, double hi) {
            const auto r = classify_recurrence(model);
            return InvariantMeasure(model, r).probability(lo, hi);
        },
        py::arg("model"), py::arg("lo"), py::arg("hi"));

    m.def(
        "mean_exit_time",
        [](const DiffusionModel& model, double a, double b, double x) { return mean_exit_time(model, a, b, x); },
        py::arg("model"), py::arg("a"), py::arg("b"), py::arg("x"));

    m.def(
        "hitting_moment_table",
        [](const DiffusionModel& model, double target, const std::string& side, const std::vector<double>& x,
           int order, double rel_tol) {
            MomentOptions opt;
            opt.rel_tol = rel_tol;
            const MomentTarget t = to_side(side);
            MomentTable table;
            {
                py::gil_scoped_release release;
                table = hitting_moment_table(model, target, t, x, order, opt);
            }
            return table_dict(table);
        },
        py::arg("model"), py::arg("target"), py::arg("side"), py::arg("x"), py::arg("order"),
        py::arg("rel_tol") = 1e-8);

    m.def(
        "exit_moment_table",
        [](const DiffusionModel& model, double a, double b, const std::vector<double>& x, int order, double rel_tol) {
            MomentOptions opt;
            opt.rel_tol = rel_tol;
            return table_dict(exit_moment_table(model, a, b, x, order, opt));
        },
        py::arg("model"), py::arg("a"), py::arg("b"), py::arg("x"), py::arg("order"), py::arg("rel_tol") = 1e-8);

    m.def(
        "simultaneity_consistent",
        [](const std::vector<std::vector<double>>& values) {
            MomentTable t;
            t.values = values;
            t.x_grid.resize(values.empty() ? 0 : values.front().size());
            return simultaneity_check(t).consistent;
        },
        py::arg("values"));

    // Brackets and bounds.
    m.def(
        "integral_I",
        [](double p, double q, double x, double a) {
            const auto r = power_integral_I(p, q, x, a);
            return py::make_tuple(r.lower, r.value, r.upper);
        },
        py::arg("p"), py::arg("q"), py::arg("x"), py::arg("a"), "(lower, value, upper)");
    m.def(
        "integral_J",
        [](double p, double q, double x, double a) {
            const auto r = power_integral_J(p, q, x, a);
            return py::make_tuple(r.lower, r.value, r.upper);
        },
        py::arg("p"), py::arg("q"), py::arg("x"), py::arg("a"), "(lower, value, upper)");

    py::class_<RestoringFloor>(m, "RestoringFloor")
        .def(py::init([](double sigma0, double gamma, double r) { return RestoringFloor{sigma0, gamma, r}; }),
             py::arg("sigma0") = 1.0, py::arg("gamma") = 0.0, py::arg("r") = 1.0)
        .def_readwrite("sigma0", &RestoringFloor::sigma0)
        .def_readwrite("gamma", &RestoringFloor::gamma)
        .def_readwrite("r", &RestoringFloor::r);
    py::class_<RestoringCeiling>(m, "RestoringCeiling")
        .def(py::init([](double sigma1, double delta, double R) { return RestoringCeiling{sigma1, delta, R}; }),
             py::arg("sigma1") = 1.0, py::arg("delta") = 0.0, py::arg("R") = 1.0)
        .def_readwrite("sigma1", &RestoringCeiling::sigma1)
        .def_readwrite("delta", &RestoringCeiling::delta)
        .def_readwrite("R", &RestoringCeiling::R);

    m.def(
        "moment_upper_bound",
        [](double M0, const RestoringFloor& floor, double order, double x) {
            return moment_upper_bound(MomentBoundParams::from(assumption_params(M0, floor, std::nullopt), order), x);
        },
        py::arg("M0"), py::arg("floor"), py::arg("order"), py::arg("x"));
    m.def(
        "moment_lower_bound",
        [](double M0, const RestoringCeiling& ceiling, int order, double x, double a) {
            const auto lb = moment_lower_bound(
                MomentBoundParams::from(assumption_params(M0, std::nullopt, ceiling), order), x, a);
            return lb.infinite ? INFINITY : lb.value;
        },
        py::arg("M0"), py::arg("ceiling"), py::arg("order"), py::arg("x"), py::arg("a"),
        "+inf once the order is past the divergence threshold");

    // Monte Carlo.
    m.def(
        "estimate_hitting_moments",
        [](const DiffusionModel& model, double x0, double target, int max_order, double h, double horizon,
           std::size_t replicas, std::uint64_t seed, unsigned threads) {
            const SimConfig cfg = sim_config(h, horizon, replicas, seed, threads);
            std::vector<MomentEstimate> est;
            {
                py::gil_scoped_release release;
                est = estimate_hitting_moments(model, cfg, x0, target, max_order);
            }
            py::list out;
            for (const auto& e : est) {
                py::dict d;
                d["order"] = e.order;
                d["estimate"] = e.estimate;
                d["std_error"] = e.std_error;
                d["censored_fraction"] = e.censored_fraction;
                out.append(d);
            }
            return out;
        },
        py::arg("model"), py::arg("x0"), py::arg("target"), py::arg("max_order") = 1, py::arg("h") = 1e-3,
        py::arg("horizon") = 100.0, py::arg("replicas") = 1000, py::arg("seed") = 1, py::arg("threads") = 0);

    m.def(
        "estimate_constants",
        [](const DiffusionModel& model, const py::object& f, double p, double a, double b, double h, double horizon,
           std::size_t replicas, std::uint64_t seed, unsigned threads) {
            SimConfig cfg = sim_config(h, horizon, replicas, seed, threads);
            cfg.a = a;
            cfg.b = b;
            const RealFunction fn = to_function(f);
            MomentEstimates est;
            {
                py::gil_scoped_release release;
                est = estimate_constants(model, cfg, fn, p);
            }
            py::dict d;
            d["l_hat"] = estimate_dict(est.l_hat);
            d["e_a_r1"] = estimate_dict(est.e_a_r1);
            d["l_times_e_a_r1"] = estimate_dict(est.l_times_e_a_r1);
            d["mu_f"] = estimate_dict(est.mu_f);
            d["mu_abs_f"] = estimate_dict(est.mu_abs_f);
            d["e_r1_half"] = estimate_dict(est.e_r1_half);
            d["e_abs_eta"] = estimate_dict(est.e_abs_eta);
            d["e_a_r1_p"] = estimate_dict(est.e_a_r1_p);
            d["e_abs_r2_minus_r1"] = estimate_dict(est.e_abs_r2_minus_r1);
            d["cycles"] = est.cycles;
            d["replicas"] = est.replicas;
            return d;
        },
        py::arg("model"), py::arg("f"), py::arg("p") = 2.0, py::arg("a") = -0.5, py::arg("b") = 0.5,
        py::arg("h") = 1e-3, py::arg("horizon") = 100.0, py::arg("replicas") = 100, py::arg("seed") = 1,
        py::arg("threads") = 0,
        "f is an expression in x or an (lo, hi) pair for the indicator of [lo, hi]");

    m.def(
        "cycle_integrals",
        [](const DiffusionModel& model, const py::object& f, double a, double b, double h, double horizon,
           std::size_t replicas, std::uint64_t seed, unsigned threads) {
            SimConfig cfg = sim_config(h, horizon, replicas, seed, threads);
            cfg.a = a;
            cfg.b = b;
            const RealFunction fn = to_function(f);
            std::vector<RegenerationSample> s;
            {
                py::gil_scoped_release release;
                s = simulate_regenerations(model, cfg, fn);
            }
            std::vector<std::vector<double>> out;
            for (auto& r : s) out.push_back(std::move(r.cycle_integrals));
            return out;
        },
        py::arg("model"), py::arg("f"), py::arg("a") = -0.5, py::arg("b") = 0.5, py::arg("h") = 1e-3,
        py::arg("horizon") = 50.0, py::arg("replicas") = 100, py::arg("seed") = 1, py::arg("threads") = 0,
        "Per replica, the integrals of f over the complete regeneration cycles");

    m.def(
        "run",
        [](const std::string& command, const std::string& config, std::optional<std::string> out,
           std::optional<std::uint64_t> seed, std::optional<std::size_t> replicas, unsigned threads) {
            CommandOutcome r;
            {
                py::gil_scoped_release release;
                r = run_command(command, config, out, seed, replicas, threads);
            }
            py::dict d;
            d["exit_code"] = r.exit_code;
            d["files"] = r.files;
            d["messages"] = r.messages;
            return d;
        },
        py::arg("command"), py::arg("config") = "", py::arg("out") = py::none(), py::arg("seed") = py::none(),
        py::arg("replicas") = py::none(), py::arg("threads") = 0,
        "Runs a CLI subcommand (model, moments, deviation, selftest) in-process");
}
