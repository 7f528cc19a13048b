#include "kacdiff/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "kacdiff/errors.hpp"
#include "kacdiff/expression.hpp"
#include "kacdiff/io.hpp"

namespace kacdiff {

namespace {

using Entry = ConfigFile::Entry;
using Section = ConfigFile::Section;

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

double parse_number(std::string_view text, int line, int column, const std::string& what) {
    const std::string s(trim(text));
    if (s.empty()) throw ParseError("expected a number for " + what, line, column);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || std::isnan(v))
        throw ParseError("expected a number for " + what + ", got '" + s + "'", line, column);
    return v;
}

double number(const Entry& e, const std::string& key) { return parse_number(e.value, e.line, e.column, "'" + key + "'"); }

long long integer(const Entry& e, const std::string& key) {
    const double v = number(e, key);
    if (v != std::floor(v) || std::abs(v) > 9e15)
        throw ParseError("expected an integer for '" + key + "'", e.line, e.column);
    return static_cast<long long>(v);
}

bool boolean(const Entry& e, const std::string& key) {
    const std::string v = lower(std::string(trim(e.value)));
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    throw ParseError("expected true or false for '" + key + "'", e.line, e.column);
}

struct Call {
    std::string name;
    std::vector<double> args;
};

// `name(a, b, ...)`; nullopt when the text is not of that shape.
std::optional<Call> parse_call(const std::string& text, int line, int column) {
    const auto open = text.find('(');
    if (open == std::string::npos || text.empty() || trim(text).back() != ')') return std::nullopt;
    Call call;
    call.name = lower(std::string(trim(std::string_view(text).substr(0, open))));
    if (call.name.empty() || !std::all_of(call.name.begin(), call.name.end(),
                                          [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }))
        return std::nullopt;
    const auto close = text.rfind(')');
    std::string_view inner = std::string_view(text).substr(open + 1, close - open - 1);
    if (trim(inner).empty()) return call;
    std::size_t start = 0;
    for (;;) {
        const auto comma = inner.find(',', start);
        const auto piece = inner.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        call.args.push_back(parse_number(piece, line, column + static_cast<int>(open + 1 + start),
                                         "argument of " + call.name));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return call;
}

void expect_args(const Call& c, std::size_t n, int line, int column) {
    if (c.args.size() != n)
        throw ParseError(c.name + " takes " + std::to_string(n) + " arguments", line, column);
}

void check_keys(const ConfigFile& file, const std::string& name, const std::set<std::string>& allowed) {
    const Section* s = file.section(name);
    if (!s) return;
    for (const auto& [key, e] : *s)
        if (!allowed.count(key)) throw ParseError("unknown key '" + key + "' in [" + name + "]", e.line, e.key_column);
}

const Entry* find(const Section* s, const std::string& key) {
    if (!s) return nullptr;
    auto it = s->find(key);
    return it == s->end() ? nullptr : &it->second;
}

const Entry& require(const Section* s, const std::string& section, const std::string& key) {
    const Entry* e = find(s, key);
    if (!e) throw ConfigError("missing key '" + key + "' in [" + section + "]");
    return *e;
}

std::vector<double> grid(const Entry& e, const std::string& key) {
    auto g = parse_grid(e.value, e.line, e.column);
    if (g.empty()) throw ConfigError("grid '" + key + "' (line " + std::to_string(e.line) + ") is empty");
    for (std::size_t i = 1; i < g.size(); ++i)
        if (!(g[i] > g[i - 1]))
            throw ConfigError("grid '" + key + "' (line " + std::to_string(e.line) + ") must be increasing");
    return g;
}

InitialLaw parse_initial(const Entry& e, const ModelConfig& model) {
    const std::string text(trim(e.value));
    if (lower(text) == "invariant") {
        DiffusionModel m(model.spec());
        const auto report = classify_recurrence(m);
        return InitialLaw::invariant(InvariantMeasure(m, report));
    }
    const auto call = parse_call(text, e.line, e.column);
    if (!call) throw ParseError("initial law must be point(x), uniform(lo, hi), normal(m, s) or invariant", e.line, e.column);
    if (call->name == "point") {
        expect_args(*call, 1, e.line, e.column);
        return InitialLaw::point(call->args[0]);
    }
    if (call->name == "uniform") {
        expect_args(*call, 2, e.line, e.column);
        return InitialLaw::uniform(call->args[0], call->args[1]);
    }
    if (call->name == "normal") {
        expect_args(*call, 2, e.line, e.column);
        return InitialLaw::normal(call->args[0], call->args[1]);
    }
    throw ParseError("unknown initial law '" + call->name + "'", e.line, e.column);
}

FunctionConfig parse_function(const Entry& e, const Expression::Constants& constants) {
    FunctionConfig out;
    out.text = std::string(trim(e.value));
    const auto call = lower(out.text).rfind("indicator", 0) == 0 ? parse_call(out.text, e.line, e.column) : std::nullopt;
    if (call && call->name == "indicator") {
        expect_args(*call, 2, e.line, e.column);
        const double lo = call->args[0], hi = call->args[1];
        if (!(lo < hi)) throw ConfigError("indicator needs lo < hi (line " + std::to_string(e.line) + ")");
        out.f = [lo, hi](double x) { return x >= lo && x <= hi ? 1.0 : 0.0; };
        out.sup = 1.0;
        out.support = std::make_pair(lo, hi);
        return out;
    }
    const auto expr = Expression::parse(e.value, constants, e.line, e.column - 1);
    out.f = [expr](double x) { return expr(x); };
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

ConfigFile ConfigFile::parse(std::string_view text) {
    ConfigFile out;
    std::string current;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
        const auto hash = raw.find_first_of("#;");
        std::string_view body = hash == std::string_view::npos ? raw : raw.substr(0, hash);
        if (trim(body).empty()) continue;
        const int indent = static_cast<int>(body.find_first_not_of(" \t"));
        const std::string_view content = trim(body);
        if (content.front() == '[') {
            if (content.back() != ']')
                throw ParseError("section header must end with ']'", line_no, indent + static_cast<int>(content.size()));
            current = lower(std::string(trim(content.substr(1, content.size() - 2))));
            if (current.empty()) throw ParseError("empty section name", line_no, indent + 1);
            if (out.section_lines_.count(current))
                throw ParseError("duplicate section [" + current + "]", line_no, indent + 1);
            out.sections_[current];
            out.section_lines_[current] = line_no;
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no, indent + 1);
        if (current.empty()) throw ParseError("key outside of any [section]", line_no, indent + 1);
        const std::string key(trim(body.substr(0, eq)));
        if (key.empty()) throw ParseError("missing key before '='", line_no, static_cast<int>(eq) + 1);
        std::string_view value = body.substr(eq + 1);
        const std::size_t lead = value.find_first_not_of(" \t");
        const int column = static_cast<int>(eq + 1 + (lead == std::string_view::npos ? 0 : lead)) + 1;
        value = trim(value);
        if (value.empty()) throw ParseError("missing value for '" + key + "'", line_no, column);
        auto& section = out.sections_[current];
        if (section.count(key)) throw ParseError("duplicate key '" + key + "'", line_no, indent + 1);
        section[key] = Entry{std::string(value), line_no, column, indent + 1};
    }
    return out;
}

const ConfigFile::Section* ConfigFile::section(const std::string& name) const {
    auto it = sections_.find(name);
    return it == sections_.end() ? nullptr : &it->second;
}

std::string ConfigFile::canonical(const KeyFilter& keep) const {
    std::string out;
    for (const auto& [name, entries] : sections_) {
        std::string body;
        for (const auto& [key, e] : entries)
            if (!keep || keep(name, key)) body += key + "=" + e.value + "\n";
        if (!body.empty() || !keep) out += "[" + name + "]\n" + body;
    }
    return out;
}

void ConfigFile::set(const std::string& section, const std::string& key, const std::string& value) {
    sections_[section][key] = Entry{value, 0, 0, 0};
}

DiffusionSpec ModelConfig::spec() const {
    if (family == "ou") return DiffusionSpec::ornstein_uhlenbeck(theta);
    if (family == "brownian") return DiffusionSpec::brownian();
    if (family == "bounded_drift") return DiffusionSpec::bounded_drift(theta);
    const auto b = Expression::parse(drift, constants);
    const auto s = Expression::parse(diffusion, constants);
    return {[b](double x) { return b(x); }, [s](double x) { return s(x); },
            "custom(drift=" + b.text() + ";diffusion=" + s.text() + ")", ""};
}

std::vector<double> parse_grid(const std::string& text, int line, int column) {
    const std::string t(trim(text));
    if (t.empty()) return {};
    if (const auto call = parse_call(t, line, column)) {
        expect_args(*call, 3, line, column);
        const double lo = call->args[0], hi = call->args[1];
        const double nd = call->args[2];
        if (nd != std::floor(nd) || nd < 1) throw ParseError(call->name + " needs a positive integer count", line, column);
        const auto n = static_cast<std::size_t>(nd);
        std::vector<double> out(n);
        if (call->name == "linspace") {
            for (std::size_t i = 0; i < n; ++i)
                out[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
        } else if (call->name == "geomspace") {
            if (!(lo > 0.0) || !(hi > 0.0)) throw ParseError("geomspace needs positive ends", line, column);
            for (std::size_t i = 0; i < n; ++i)
                out[i] = n == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1));
        } else {
            throw ParseError("unknown grid form '" + call->name + "'", line, column);
        }
        if (n > 1) out.back() = hi;
        return out;
    }
    std::vector<double> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = t.find(',', start);
        const std::string piece = t.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        out.push_back(parse_number(piece, line, column + static_cast<int>(start), "grid value"));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

// Where files go and how many threads compute them do not change the results.
std::string ExperimentConfig::hash() const {
    return fnv1a_hex(file.canonical([](const std::string& section, const std::string& key) {
        return section != "output" && !(section == "simulation" && key == "threads");
    }));
}

void ExperimentConfig::override_seed(std::uint64_t seed) {
    sim.seed = seed;
    file.set("simulation", "seed", std::to_string(seed));
}

void ExperimentConfig::override_replicas(std::size_t replicas) {
    if (replicas < 1) throw ConfigError("--replicas must be >= 1");
    sim.replicas = replicas;
    file.set("simulation", "replicas", std::to_string(replicas));
}

void ExperimentConfig::override_out_dir(const std::string& dir) {
    out_dir = dir;
    file.set("output", "dir", dir);
}

void ExperimentConfig::override_tolerance(double tol) {
    if (!(tol > 0.0)) throw ConfigError("--tol must be positive");
    if (moments) moments->options.rel_tol = tol;
    file.set("moments", "tol", format_number(tol));
}

void ExperimentConfig::override_threads(unsigned threads) {
    // thread count never changes results, so it stays out of the hash
    sim.threads = threads;
    if (moments) moments->options.threads = threads == 0 ? 1 : threads;
}

ExperimentConfig parse_experiment(std::string_view text) {
    ExperimentConfig cfg;
    cfg.file = ConfigFile::parse(text);
    const ConfigFile& file = cfg.file;

    static const std::set<std::string> known_sections = {"model",      "constants", "assumptions", "moments",
                                                         "simulation", "deviation", "output"};
    for (const auto& [name, line] : file.section_lines())
        if (!known_sections.count(name)) throw ParseError("unknown section [" + name + "]", line, 1);

    // constants
    if (const Section* s = file.section("constants"))
        for (const auto& [key, e] : *s) cfg.model.constants[key] = number(e, key);

    // model
    check_keys(file, "model", {"family", "theta", "drift", "diffusion"});
    const Section* model = file.section("model");
    if (!model) throw ConfigError("missing [model] section");
    if (const Entry* e = find(model, "family")) {
        cfg.model.family = lower(e->value);
        if (cfg.model.family != "ou" && cfg.model.family != "brownian" && cfg.model.family != "bounded_drift" &&
            cfg.model.family != "custom")
            throw ParseError("family must be ou, brownian, bounded_drift or custom", e->line, e->column);
    }
    if (const Entry* e = find(model, "theta")) cfg.model.theta = number(*e, "theta");
    if (cfg.model.family == "custom") {
        const Entry& d = require(model, "model", "drift");
        const Entry& s = require(model, "model", "diffusion");
        Expression::parse(d.value, cfg.model.constants, d.line, d.column - 1);
        Expression::parse(s.value, cfg.model.constants, s.line, s.column - 1);
        cfg.model.drift = d.value;
        cfg.model.diffusion = s.value;
    }

    // assumptions
    check_keys(file, "assumptions", {"M0", "sigma0", "gamma", "r", "sigma1", "delta", "R", "p_star"});
    if (const Section* s = file.section("assumptions")) {
        AssumptionParams a;
        a.M0 = number(require(s, "assumptions", "M0"), "M0");
        if (find(s, "r")) {
            RestoringFloor f;
            f.r = number(*find(s, "r"), "r");
            if (const Entry* e = find(s, "sigma0")) f.sigma0 = number(*e, "sigma0");
            if (const Entry* e = find(s, "gamma")) f.gamma = number(*e, "gamma");
            a.floor = f;
        }
        if (find(s, "R")) {
            RestoringCeiling c;
            c.R = number(*find(s, "R"), "R");
            if (const Entry* e = find(s, "sigma1")) c.sigma1 = number(*e, "sigma1");
            if (const Entry* e = find(s, "delta")) c.delta = number(*e, "delta");
            a.ceiling = c;
        }
        try {
            a.validate();
        } catch (const DomainError& err) {
            throw ConfigError(std::string("[assumptions]: ") + err.what());
        }
        cfg.assumptions = a;
        if (const Entry* e = find(s, "p_star")) cfg.p_star = number(*e, "p_star");
    }

    // moments
    check_keys(file, "moments", {"side", "target", "a", "b", "order", "x_grid", "tol", "horizon", "max_nodes"});
    if (const Section* s = file.section("moments")) {
        MomentsConfig m;
        const Entry& side = require(s, "moments", "side");
        const std::string v = lower(side.value);
        if (v == "from_above")
            m.side = MomentTarget::FromAbove;
        else if (v == "from_below")
            m.side = MomentTarget::FromBelow;
        else if (v == "exit")
            m.side = MomentTarget::Exit;
        else
            throw ParseError("side must be from_above, from_below or exit", side.line, side.column);
        if (m.side == MomentTarget::Exit) {
            m.a = number(require(s, "moments", "a"), "a");
            m.b = number(require(s, "moments", "b"), "b");
            if (!(m.a < m.b)) throw ConfigError("[moments] needs a < b");
        } else {
            m.level = number(require(s, "moments", "target"), "target");
        }
        const long long order = integer(require(s, "moments", "order"), "order");
        if (order < 0) throw ConfigError("[moments] order must be >= 0");
        m.order = static_cast<int>(order);
        m.x_grid = grid(require(s, "moments", "x_grid"), "x_grid");
        if (const Entry* e = find(s, "tol")) m.options.rel_tol = number(*e, "tol");
        if (const Entry* e = find(s, "horizon")) m.options.horizon = number(*e, "horizon");
        if (const Entry* e = find(s, "max_nodes")) m.options.max_nodes = static_cast<std::size_t>(integer(*e, "max_nodes"));
        cfg.moments = m;
    }

    // simulation
    check_keys(file, "simulation", {"h", "horizon", "replicas", "seed", "a", "b", "initial", "threads", "bridge",
                                    "noise_resolution", "guard"});
    if (const Section* s = file.section("simulation")) {
        SimConfig& sim = cfg.sim;
        if (const Entry* e = find(s, "h")) sim.h = number(*e, "h");
        if (const Entry* e = find(s, "horizon")) sim.horizon = number(*e, "horizon");
        if (const Entry* e = find(s, "replicas")) {
            const long long r = integer(*e, "replicas");
            if (r < 1) throw ConfigError("[simulation] replicas must be >= 1");
            sim.replicas = static_cast<std::size_t>(r);
        }
        if (const Entry* e = find(s, "seed")) sim.seed = static_cast<std::uint64_t>(integer(*e, "seed"));
        if (const Entry* e = find(s, "a")) sim.a = number(*e, "a");
        if (const Entry* e = find(s, "b")) sim.b = number(*e, "b");
        if (const Entry* e = find(s, "threads")) sim.threads = static_cast<unsigned>(integer(*e, "threads"));
        if (const Entry* e = find(s, "bridge")) sim.bridge = boolean(*e, "bridge");
        if (const Entry* e = find(s, "noise_resolution")) sim.noise_resolution = number(*e, "noise_resolution");
        if (const Entry* e = find(s, "guard")) sim.guard = number(*e, "guard");
        if (const Entry* e = find(s, "initial")) sim.initial = parse_initial(*e, cfg.model);
        try {
            sim.validate();
        } catch (const DomainError& err) {
            throw ConfigError(std::string("[simulation]: ") + err.what());
        }
    }

    // deviation
    check_keys(file, "deviation", {"f", "f_sup", "p", "t_grid", "eps_grid", "variant", "bdg", "mu_f", "cf_starts",
                                   "cf_replicas", "constants_replicas", "constants_horizon"});
    if (const Section* s = file.section("deviation")) {
        DeviationConfig d;
        d.f = parse_function(require(s, "deviation", "f"), cfg.model.constants);
        if (const Entry* e = find(s, "f_sup")) d.f.sup = number(*e, "f_sup");
        if (const Entry* e = find(s, "p")) d.p = number(*e, "p");
        if (!(d.p > 1.0)) throw ConfigError("[deviation] p must exceed 1");
        d.t_grid = grid(require(s, "deviation", "t_grid"), "t_grid");
        d.eps_grid = grid(require(s, "deviation", "eps_grid"), "eps_grid");
        if (!(d.t_grid.front() > 0.0)) throw ConfigError("[deviation] t_grid must be positive");
        if (!(d.eps_grid.front() > 0.0)) throw ConfigError("[deviation] eps_grid must be positive");
        if (const Entry* e = find(s, "variant")) {
            const std::string v = lower(e->value);
            if (v == "sup")
                d.variant = BoundVariant::Sup;
            else if (v == "l1")
                d.variant = BoundVariant::L1;
            else if (v == "both")
                d.variant = BoundVariant::Both;
            else
                throw ParseError("variant must be sup, l1 or both", e->line, e->column);
        }
        if (d.variant != BoundVariant::L1 && !d.f.sup)
            throw ConfigError("[deviation] f_sup is required for the sup-norm bound unless f is an indicator");
        if (const Entry* e = find(s, "bdg")) d.bdg = number(*e, "bdg");
        if (const Entry* e = find(s, "mu_f")) d.mu_f = number(*e, "mu_f");
        if (const Entry* e = find(s, "cf_starts")) {
            d.cf_starts = grid(*e, "cf_starts");
        } else if (d.f.support) {
            d.cf_starts = parse_grid("linspace(" + format_number(d.f.support->first) + "," +
                                     format_number(d.f.support->second) + ",5)");
        } else {
            d.cf_starts = parse_grid("linspace(" + format_number(cfg.sim.a) + "," + format_number(cfg.sim.b) + ",5)");
        }
        if (const Entry* e = find(s, "cf_replicas")) d.cf_replicas = static_cast<std::size_t>(integer(*e, "cf_replicas"));
        if (const Entry* e = find(s, "constants_replicas"))
            d.constants_replicas = static_cast<std::size_t>(integer(*e, "constants_replicas"));
        if (const Entry* e = find(s, "constants_horizon")) d.constants_horizon = number(*e, "constants_horizon");
        cfg.deviation = d;
    }

    check_keys(file, "output", {"dir"});
    if (const Entry* e = find(file.section("output"), "dir")) cfg.out_dir = e->value;
    return cfg;
}

ExperimentConfig load_experiment(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_experiment(ss.str());
}

}  // namespace kacdiff
