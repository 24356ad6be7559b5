#include "gsfg/scenario_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace gsfg {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_list(const std::vector<double>& values) {
    std::string out = "[";
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ", ";
        out += fmt(values[i]);
    }
    return out + "]";
}

// --- raw line structure ------------------------------------------------------

struct KeyValue {
    std::string key;
    std::string value;
    int line = 0;
    int value_col = 0;
    bool used = false;
};

struct Section {
    std::string header;  // e.g. "node 4", "learning"
    int line = 0;
    std::vector<KeyValue> entries;
};

std::string strip(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// removes a trailing comment, respecting quoted strings
std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') quoted = !quoted;
        if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
}

std::vector<Section> split_sections(const std::string& text) {
    std::vector<Section> sections;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = strip(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ParseError("section header missing ']'", line_no, 1);
            Section s;
            s.header = strip(line.substr(1, line.size() - 2));
            s.line = line_no;
            if (s.header.empty())
                throw ParseError("empty section header", line_no, 1);
            sections.push_back(std::move(s));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("expected 'key = value'", line_no, 1);
        if (sections.empty())
            throw ParseError("key outside any section", line_no, 1);
        KeyValue kv;
        kv.key = strip(line.substr(0, eq));
        kv.value = strip(line.substr(eq + 1));
        kv.line = line_no;
        kv.value_col = static_cast<int>(raw.find('=')) + 2;
        if (kv.key.empty()) throw ParseError("empty key", line_no, 1);
        if (kv.value.empty())
            throw ParseError("empty value for '" + kv.key + "'", line_no, kv.value_col);
        sections.back().entries.push_back(std::move(kv));
    }
    return sections;
}

// --- value micro-parser --------------------------------------------------------

class ValueParser {
public:
    ValueParser(const KeyValue& kv) : kv_(kv), s_(kv.value) {}

    double number() {
        skip_ws();
        const char* begin = s_.c_str() + pos_;
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin) fail("expected a number");
        pos_ += static_cast<std::size_t>(end - begin);
        return v;
    }

    std::vector<double> number_list() {
        expect('[');
        std::vector<double> values;
        skip_ws();
        if (peek() == ']') {
            ++pos_;
            return values;
        }
        for (;;) {
            values.push_back(number());
            skip_ws();
            if (peek() == ',') {
                ++pos_;
                continue;
            }
            expect(']');
            return values;
        }
    }

    std::vector<std::vector<double>> matrix() {
        expect('[');
        std::vector<std::vector<double>> rows;
        skip_ws();
        if (peek() == ']') {
            ++pos_;
            return rows;
        }
        for (;;) {
            rows.push_back(number_list());
            skip_ws();
            if (peek() == ',') {
                ++pos_;
                continue;
            }
            expect(']');
            return rows;
        }
    }

    std::vector<std::pair<int, int>> pair_list() {
        const auto rows = matrix();
        std::vector<std::pair<int, int>> pairs;
        for (const auto& row : rows) {
            if (row.size() != 2) fail("expected pairs like [[1,4],[2,4]]");
            pairs.push_back({static_cast<int>(row[0]), static_cast<int>(row[1])});
        }
        return pairs;
    }

    std::string word() {
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < s_.size() &&
               (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
            ++pos_;
        if (pos_ == start) fail("expected a name");
        return s_.substr(start, pos_ - start);
    }

    std::string quoted() {
        skip_ws();
        expect('"');
        std::size_t end = s_.find('"', pos_);
        if (end == std::string::npos) fail("unterminated string");
        std::string out = s_.substr(pos_, end - pos_);
        pos_ = end + 1;
        return out;
    }

    bool boolean() {
        const std::string w = word();
        if (w == "true") return true;
        if (w == "false") return false;
        fail("expected true or false");
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < s_.size() ? s_[pos_] : '\0';
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    void finish() {
        skip_ws();
        if (pos_ != s_.size()) fail("unexpected trailing text");
    }

    [[noreturn]] void fail(const std::string& what) {
        throw ParseError("value of '" + kv_.key + "': " + what, kv_.line,
                         kv_.value_col + static_cast<int>(pos_));
    }

private:
    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_])))
            ++pos_;
    }

    const KeyValue& kv_;
    std::string s_;
    std::size_t pos_ = 0;
};

// --- section readers -----------------------------------------------------------

class SectionReader {
public:
    explicit SectionReader(Section& section) : section_(section) {}

    const KeyValue* find(const std::string& key) {
        for (auto& kv : section_.entries) {
            if (kv.key == key) {
                kv.used = true;
                return &kv;
            }
        }
        return nullptr;
    }

    const KeyValue& require(const std::string& key) {
        const KeyValue* kv = find(key);
        if (!kv)
            throw ParseError("section [" + section_.header + "] is missing '" + key + "'",
                             section_.line, 1);
        return *kv;
    }

    double number(const std::string& key) {
        ValueParser p(require(key));
        double v = p.number();
        p.finish();
        return v;
    }

    double number_or(const std::string& key, double fallback) {
        const KeyValue* kv = find(key);
        if (!kv) return fallback;
        ValueParser p(*kv);
        double v = p.number();
        p.finish();
        return v;
    }

    bool boolean_or(const std::string& key, bool fallback) {
        const KeyValue* kv = find(key);
        if (!kv) return fallback;
        ValueParser p(*kv);
        bool v = p.boolean();
        p.finish();
        return v;
    }

    std::vector<double> number_list(const std::string& key) {
        ValueParser p(require(key));
        auto v = p.number_list();
        p.finish();
        return v;
    }

    void reject_unused() const {
        for (const auto& kv : section_.entries)
            if (!kv.used)
                throw ParseError("unknown key '" + kv.key + "' in section [" +
                                     section_.header + "]",
                                 kv.line, 1);
    }

    Section& section() { return section_; }

private:
    Section& section_;
};

expr::AstPtr parse_expr_value(const KeyValue& kv, std::string quoted_text) {
    try {
        return expr::parse(quoted_text);
    } catch (const SyntaxError& e) {
        throw ParseError("value of '" + kv.key + "': " + e.what(), kv.line,
                         kv.value_col);
    } catch (const UnknownFunction& e) {
        throw ParseError("value of '" + kv.key + "': " + e.what(), kv.line,
                         kv.value_col);
    }
}

NodeSpec read_node(Section& section, NodeId id, std::map<NodeId, double>& targets,
                   std::map<NodeId, double>& fixed_inputs,
                   std::set<NodeId>& output_nodes) {
    SectionReader reader(section);
    NodeSpec node;
    node.id = id;

    ValueParser dyn(reader.require("dynamics"));
    const std::string kind = dyn.word();
    dyn.finish();

    if (kind == "identity") {
        node.dynamics = Identity{};
    } else if (kind == "static") {
        const KeyValue& kv = reader.require("expr");
        ValueParser p(kv);
        StaticFunction sf;
        sf.f = parse_expr_value(kv, p.quoted());
        p.finish();
        expr::check_variables(*sf.f, std::vector<std::string>{"u"});
        node.dynamics = sf;
    } else if (kind == "tf") {
        LinearTF tf;
        tf.num = reader.number_list("num");
        tf.den = reader.number_list("den");
        if (tf.den.empty()) throw SemanticError("empty denominator (node " +
                                                std::to_string(id) + ")");
        node.dynamics = tf;
    } else if (kind == "ss") {
        LinearSS ss;
        const KeyValue& akv = reader.require("A");
        ValueParser ap(akv);
        const auto rows = ap.matrix();
        ap.finish();
        const int n = static_cast<int>(rows.size());
        ss.A = Eigen::MatrixXd::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            if (static_cast<int>(rows[static_cast<std::size_t>(i)].size()) != n)
                throw SemanticError("A must be square (node " + std::to_string(id) + ")");
            for (int j = 0; j < n; ++j)
                ss.A(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
        const auto b = reader.number_list("B");
        const auto c = reader.number_list("C");
        if (static_cast<int>(b.size()) != n || static_cast<int>(c.size()) != n)
            throw SemanticError("B/C dimensions disagree with A (node " +
                                std::to_string(id) + ")");
        ss.B = Eigen::Map<const Eigen::VectorXd>(b.data(), n);
        ss.C = Eigen::Map<const Eigen::RowVectorXd>(c.data(), n);
        ss.D = reader.number_or("D", 0.0);
        node.dynamics = ss;
    } else if (kind == "ode") {
        NonlinearODE ode;
        const int states = static_cast<int>(reader.number("states"));
        if (states < 1)
            throw SemanticError("ode needs at least one state (node " +
                                std::to_string(id) + ")");
        std::vector<std::string> names;
        for (int i = 1; i <= states; ++i) names.push_back("x" + std::to_string(i));
        names.push_back("u");
        for (int i = 1; i <= states; ++i) {
            const KeyValue& kv = reader.require("f" + std::to_string(i));
            ValueParser p(kv);
            auto ast = parse_expr_value(kv, p.quoted());
            p.finish();
            expr::check_variables(*ast, names);
            ode.f.push_back(std::move(ast));
        }
        const KeyValue& hkv = reader.require("h");
        ValueParser hp(hkv);
        ode.h = parse_expr_value(hkv, hp.quoted());
        hp.finish();
        expr::check_variables(*ode.h, names);
        node.dynamics = ode;
    } else if (kind == "delay") {
        Delay d;
        d.tau = reader.number("tau");
        if (!(d.tau > 0.0))
            throw SemanticError("delay tau must be positive (node " +
                                std::to_string(id) + ")");
        node.dynamics = d;
    } else {
        throw ParseError("unknown dynamics kind '" + kind + "'", section.line, 1);
    }

    if (const KeyValue* kv = reader.find("frechet")) {
        ValueParser p(*kv);
        const std::string strat = p.word();
        if (strat == "dc_gain") {
            node.frechet = DcGain{};
        } else if (strat == "step_response") {
            p.expect('(');
            StepResponseHorizon sr;
            sr.horizon = p.number();
            p.expect(')');
            node.frechet = sr;
        } else if (strat == "linearize") {
            node.frechet = TrajectoryLinearization{};
        } else if (strat == "constant") {
            p.expect('(');
            ConstantFrechet c;
            c.value = p.number();
            p.expect(')');
            node.frechet = c;
        } else {
            p.fail("unknown frechet strategy '" + strat + "'");
        }
        p.finish();
    }

    if (reader.boolean_or("output", false)) output_nodes.insert(id);
    if (const KeyValue* kv = reader.find("target")) {
        ValueParser p(*kv);
        targets[id] = p.number();
        p.finish();
    }
    if (const KeyValue* kv = reader.find("input")) {
        ValueParser p(*kv);
        fixed_inputs[id] = p.number();
        p.finish();
    }

    reader.reject_unused();
    return node;
}

SignalSpec read_signal(const KeyValue& kv) {
    ValueParser p(kv);
    const std::string kind = p.word();
    SignalSpec spec;
    if (kind == "step") {
        spec.kind = SignalKind::Step;
        p.expect('(');
        spec.amplitude = p.number();
        p.expect(')');
    } else if (kind == "square" || kind == "sawtooth") {
        spec.kind = kind == "square" ? SignalKind::Square : SignalKind::Sawtooth;
        p.expect('(');
        spec.amplitude = p.number();
        p.expect(',');
        spec.period = p.number();
        p.expect(')');
        if (!(spec.period > 0.0)) p.fail("period must be positive");
    } else if (kind == "sine") {
        spec.kind = SignalKind::Sine;
        p.expect('(');
        spec.amplitude = p.number();
        p.expect(',');
        spec.frequency = p.number();
        p.expect(')');
    } else if (kind == "expr") {
        spec.kind = SignalKind::ExprOfT;
        p.expect('(');
        spec.expr = parse_expr_value(kv, p.quoted());
        p.expect(')');
        expr::check_variables(*spec.expr, std::vector<std::string>{"t"});
    } else {
        p.fail("unknown signal kind '" + kind + "'");
    }
    p.finish();
    return spec;
}

}  // namespace

Scenario load_scenario(const std::string& text, const std::string& name) {
    auto sections = split_sections(text);

    Scenario scenario;
    scenario.name = name;

    std::set<NodeId> node_ids;
    std::set<BranchKey> branch_keys;
    bool saw_reference = false, saw_input = false, saw_learning = false, saw_sim = false;

    for (auto& section : sections) {
        std::istringstream hdr(section.header);
        std::string tag;
        hdr >> tag;

        if (tag == "node") {
            long id = 0;
            if (!(hdr >> id) || !hdr.eof())
                throw ParseError("expected [node <id>]", section.line, 1);
            if (!node_ids.insert(static_cast<NodeId>(id)).second)
                throw ParseError("duplicate section [node " + std::to_string(id) + "]",
                                 section.line, 1);
            scenario.graph.nodes.push_back(
                read_node(section, static_cast<NodeId>(id), scenario.static_targets,
                          scenario.fixed_inputs, scenario.graph.output_nodes));
        } else if (tag == "branch") {
            long from = 0, to = 0;
            if (!(hdr >> from >> to) || !hdr.eof())
                throw ParseError("expected [branch <from> <to>]", section.line, 1);
            if (!branch_keys.insert({static_cast<NodeId>(from), static_cast<NodeId>(to)})
                     .second)
                throw ParseError("duplicate section [branch " + std::to_string(from) +
                                     " " + std::to_string(to) + "]",
                                 section.line, 1);
            SectionReader reader(section);
            Branch b;
            b.from = static_cast<NodeId>(from);
            b.to = static_cast<NodeId>(to);
            b.weight = reader.number("weight");
            b.initial_weight = b.weight;
            b.adaptive = reader.boolean_or("adaptive", false);
            if (const KeyValue* kv = reader.find("label"))
                scenario.branch_labels[{b.from, b.to}] = strip(kv->value);
            reader.reject_unused();
            scenario.graph.branches.push_back(b);
        } else if (tag == "reference") {
            if (saw_reference)
                throw ParseError("duplicate section [reference]", section.line, 1);
            saw_reference = true;
            SectionReader reader(section);
            ReferenceModel ref;
            ref.tf.num = reader.number_list("num");
            ref.tf.den = reader.number_list("den");
            reader.reject_unused();
            if (ref.tf.den.empty()) throw SemanticError("empty denominator (reference)");
            if (ref.tf.den.front() == 0.0)
                throw SemanticError("reference denominator leading coefficient is zero");
            if (ref.tf.num.size() > ref.tf.den.size())
                throw SemanticError("reference model must be proper");
            scenario.reference = ref;
        } else if (tag == "input") {
            if (saw_input) throw ParseError("duplicate section [input]", section.line, 1);
            saw_input = true;
            SectionReader reader(section);
            scenario.input = read_signal(reader.require("signal"));
            reader.reject_unused();
        } else if (tag == "learning") {
            if (saw_learning)
                throw ParseError("duplicate section [learning]", section.line, 1);
            saw_learning = true;
            SectionReader reader(section);
            scenario.learning.gamma = reader.number_or("gamma", 0.0);
            if (const KeyValue* kv = reader.find("mode")) {
                ValueParser p(*kv);
                const std::string mode = p.word();
                p.finish();
                if (mode == "truncated")
                    scenario.learning.mode = LearningMode::Truncated;
                else if (mode == "full")
                    scenario.learning.mode = LearningMode::FullSolve;
                else
                    p.fail("unknown mode '" + mode + "'");
            }
            scenario.learning.y_floor = reader.number_or("y_floor", 1e-6);
            scenario.learning.det_tol = reader.number_or("det_tol", -1.0);
            scenario.learning.blowup_threshold = reader.number_or("blowup", 1e12);
            reader.reject_unused();
        } else if (tag == "sim") {
            if (saw_sim) throw ParseError("duplicate section [sim]", section.line, 1);
            saw_sim = true;
            SectionReader reader(section);
            scenario.duration = reader.number_or("duration", scenario.duration);
            scenario.dt = reader.number_or("dt", scenario.dt);
            if (const KeyValue* kv = reader.find("scheme")) {
                ValueParser p(*kv);
                const std::string scheme = p.word();
                p.finish();
                if (scheme == "euler")
                    scenario.scheme = Scheme::Euler;
                else if (scheme == "rk4")
                    scenario.scheme = Scheme::RK4;
                else
                    p.fail("unknown scheme '" + scheme + "'");
            }
            scenario.frechet_stride =
                static_cast<int>(reader.number_or("frechet_stride", 1));
            scenario.converge_ratio =
                reader.number_or("converge_ratio", scenario.converge_ratio);
            if (const KeyValue* kv = reader.find("log_nodes")) {
                ValueParser p(*kv);
                for (double v : p.number_list())
                    scenario.log_nodes.push_back(static_cast<NodeId>(v));
                p.finish();
            }
            if (const KeyValue* kv = reader.find("log_branches")) {
                ValueParser p(*kv);
                for (auto [a, b] : p.pair_list()) scenario.log_branches.push_back({a, b});
                p.finish();
            }
            reader.reject_unused();
        } else {
            throw ParseError("unknown section [" + section.header + "]", section.line, 1);
        }
    }

    // cross-reference checks
    for (const auto& b : scenario.graph.branches) {
        if (!node_ids.count(b.from))
            throw SemanticError("branch " + std::to_string(b.from) + "->" +
                                std::to_string(b.to) + ": unknown node " +
                                std::to_string(b.from));
        if (!node_ids.count(b.to))
            throw SemanticError("branch " + std::to_string(b.from) + "->" +
                                std::to_string(b.to) + ": unknown node " +
                                std::to_string(b.to));
    }
    for (NodeId id : scenario.log_nodes)
        if (!node_ids.count(id))
            throw SemanticError("log node " + std::to_string(id) + " unknown");
    for (const auto& [from, to] : scenario.log_branches)
        if (!scenario.graph.find_branch(from, to))
            throw SemanticError("log branch " + std::to_string(from) + "->" +
                                std::to_string(to) + " unknown");

    const auto report = validate(scenario.graph);
    if (!report.ok()) {
        std::string msg = "invalid graph:";
        for (const auto& v : report.violations) msg += " [" + v + "]";
        throw SemanticError(msg);
    }
    return scenario;
}

Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SemanticError("cannot open scenario file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    std::string stem = path;
    if (const auto slash = stem.find_last_of("/\\"); slash != std::string::npos)
        stem = stem.substr(slash + 1);
    if (const auto dot = stem.find_last_of('.'); dot != std::string::npos)
        stem = stem.substr(0, dot);
    return load_scenario(buffer.str(), stem);
}

namespace {

void print_node(std::ostream& out, const NodeSpec& node, const Scenario& scenario) {
    out << "[node " << node.id << "]\n";
    std::visit(
        [&](const auto& d) {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, Identity>) {
                out << "dynamics = identity\n";
            } else if constexpr (std::is_same_v<T, StaticFunction>) {
                out << "dynamics = static\n";
                out << "expr = \"" << expr::to_string(*d.f) << "\"\n";
            } else if constexpr (std::is_same_v<T, LinearTF>) {
                out << "dynamics = tf\n";
                out << "num = " << fmt_list(d.num) << "\n";
                out << "den = " << fmt_list(d.den) << "\n";
            } else if constexpr (std::is_same_v<T, LinearSS>) {
                out << "dynamics = ss\n";
                out << "A = [";
                for (int i = 0; i < d.order(); ++i) {
                    if (i) out << ", ";
                    std::vector<double> row(static_cast<std::size_t>(d.order()));
                    for (int j = 0; j < d.order(); ++j)
                        row[static_cast<std::size_t>(j)] = d.A(i, j);
                    out << fmt_list(row);
                }
                out << "]\n";
                std::vector<double> b(d.B.data(), d.B.data() + d.B.size());
                std::vector<double> c(d.C.data(), d.C.data() + d.C.size());
                out << "B = " << fmt_list(b) << "\n";
                out << "C = " << fmt_list(c) << "\n";
                out << "D = " << fmt(d.D) << "\n";
            } else if constexpr (std::is_same_v<T, NonlinearODE>) {
                out << "dynamics = ode\n";
                out << "states = " << d.f.size() << "\n";
                for (std::size_t i = 0; i < d.f.size(); ++i)
                    out << "f" << (i + 1) << " = \"" << expr::to_string(*d.f[i])
                        << "\"\n";
                out << "h = \"" << expr::to_string(*d.h) << "\"\n";
            } else if constexpr (std::is_same_v<T, Delay>) {
                out << "dynamics = delay\n";
                out << "tau = " << fmt(d.tau) << "\n";
            }
        },
        node.dynamics);
    if (node.frechet) {
        std::visit(
            [&](const auto& s) {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, DcGain>)
                    out << "frechet = dc_gain\n";
                else if constexpr (std::is_same_v<T, StepResponseHorizon>)
                    out << "frechet = step_response(" << fmt(s.horizon) << ")\n";
                else if constexpr (std::is_same_v<T, TrajectoryLinearization>)
                    out << "frechet = linearize\n";
                else
                    out << "frechet = constant(" << fmt(s.value) << ")\n";
            },
            *node.frechet);
    }
    if (scenario.graph.output_nodes.count(node.id)) out << "output = true\n";
    if (auto it = scenario.static_targets.find(node.id);
        it != scenario.static_targets.end())
        out << "target = " << fmt(it->second) << "\n";
    if (auto it = scenario.fixed_inputs.find(node.id); it != scenario.fixed_inputs.end())
        out << "input = " << fmt(it->second) << "\n";
    out << "\n";
}

}  // namespace

std::string print_scenario(const Scenario& scenario) {
    std::ostringstream out;

    std::vector<const NodeSpec*> nodes;
    for (const auto& n : scenario.graph.nodes) nodes.push_back(&n);
    std::sort(nodes.begin(), nodes.end(),
              [](const NodeSpec* a, const NodeSpec* b) { return a->id < b->id; });
    for (const NodeSpec* node : nodes) print_node(out, *node, scenario);

    std::vector<const Branch*> branches;
    for (const auto& b : scenario.graph.branches) branches.push_back(&b);
    std::sort(branches.begin(), branches.end(), [](const Branch* a, const Branch* b) {
        return BranchKey{a->from, a->to} < BranchKey{b->from, b->to};
    });
    for (const Branch* b : branches) {
        out << "[branch " << b->from << " " << b->to << "]\n";
        out << "weight = " << fmt(b->initial_weight) << "\n";
        if (b->adaptive) out << "adaptive = true\n";
        if (auto it = scenario.branch_labels.find({b->from, b->to});
            it != scenario.branch_labels.end())
            out << "label = " << it->second << "\n";
        out << "\n";
    }

    if (scenario.reference) {
        out << "[reference]\n";
        out << "num = " << fmt_list(scenario.reference->tf.num) << "\n";
        out << "den = " << fmt_list(scenario.reference->tf.den) << "\n\n";
    }

    out << "[input]\nsignal = ";
    switch (scenario.input.kind) {
        case SignalKind::Step:
            out << "step(" << fmt(scenario.input.amplitude) << ")";
            break;
        case SignalKind::Square:
            out << "square(" << fmt(scenario.input.amplitude) << ", "
                << fmt(scenario.input.period) << ")";
            break;
        case SignalKind::Sawtooth:
            out << "sawtooth(" << fmt(scenario.input.amplitude) << ", "
                << fmt(scenario.input.period) << ")";
            break;
        case SignalKind::Sine:
            out << "sine(" << fmt(scenario.input.amplitude) << ", "
                << fmt(scenario.input.frequency) << ")";
            break;
        case SignalKind::ExprOfT:
            out << "expr(\"" << expr::to_string(*scenario.input.expr) << "\")";
            break;
    }
    out << "\n\n";

    out << "[learning]\n";
    out << "gamma = " << fmt(scenario.learning.gamma) << "\n";
    out << "mode = "
        << (scenario.learning.mode == LearningMode::Truncated ? "truncated" : "full")
        << "\n";
    out << "y_floor = " << fmt(scenario.learning.y_floor) << "\n";
    if (scenario.learning.det_tol >= 0.0)
        out << "det_tol = " << fmt(scenario.learning.det_tol) << "\n";
    out << "blowup = " << fmt(scenario.learning.blowup_threshold) << "\n\n";

    out << "[sim]\n";
    out << "duration = " << fmt(scenario.duration) << "\n";
    out << "dt = " << fmt(scenario.dt) << "\n";
    out << "scheme = " << (scenario.scheme == Scheme::RK4 ? "rk4" : "euler") << "\n";
    out << "frechet_stride = " << scenario.frechet_stride << "\n";
    out << "converge_ratio = " << fmt(scenario.converge_ratio) << "\n";
    if (!scenario.log_nodes.empty()) {
        out << "log_nodes = [";
        for (std::size_t i = 0; i < scenario.log_nodes.size(); ++i) {
            if (i) out << ", ";
            out << scenario.log_nodes[i];
        }
        out << "]\n";
    }
    if (!scenario.log_branches.empty()) {
        out << "log_branches = [";
        for (std::size_t i = 0; i < scenario.log_branches.size(); ++i) {
            if (i) out << ", ";
            out << "[" << scenario.log_branches[i].first << ", "
                << scenario.log_branches[i].second << "]";
        }
        out << "]\n";
    }
    return out.str();
}

// --- CSV ---------------------------------------------------------------------

namespace {

// RFC-4180: quote a field only when it contains a comma, quote, or newline
std::string csv_field(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string quoted = "\"";
    for (char c : field) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    return quoted + "\"";
}

}  // namespace

std::size_t write_csv(const SimulationTrace& trace, std::ostream& out) {
    std::string header = csv_field("t");
    for (NodeId id : trace.logged_nodes)
        header += "," + csv_field("y_" + std::to_string(id));
    for (const auto& [from, to] : trace.logged_branches)
        header += "," + csv_field("w_" + std::to_string(from) + "_" + std::to_string(to));
    header += "," + csv_field("E");
    out << header << "\n";
    char buf[32];
    for (std::size_t k = 0; k < trace.steps(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", trace.t[k]);
        out << buf;
        for (const auto& series : trace.node_y) {
            std::snprintf(buf, sizeof buf, "%.17g", series[k]);
            out << ',' << buf;
        }
        for (const auto& series : trace.weights) {
            std::snprintf(buf, sizeof buf, "%.17g", series[k]);
            out << ',' << buf;
        }
        std::snprintf(buf, sizeof buf, "%.17g", trace.error[k]);
        out << ',' << buf << "\n";
    }
    if (!out) throw Error("error while writing CSV");
    return trace.steps();
}

std::size_t write_csv_file(const SimulationTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write CSV file: " + path);
    const std::size_t rows = write_csv(trace, out);
    out.flush();
    if (!out) throw Error("error while writing CSV file: " + path);
    return rows;
}

CsvData read_csv(std::istream& in) {
    CsvData data;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string field;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            const char c = line[i];
            if (quoted) {
                if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else if (c == '"') {
                    quoted = false;
                } else {
                    field += c;
                }
            } else if (c == '"') {
                quoted = true;
            } else if (c == ',') {
                fields.push_back(std::move(field));
                field.clear();
            } else {
                field += c;
            }
        }
        fields.push_back(std::move(field));
        if (first) {
            data.header = std::move(fields);
            first = false;
            continue;
        }
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) row.push_back(std::strtod(f.c_str(), nullptr));
        data.rows.push_back(std::move(row));
    }
    return data;
}

CsvData read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SemanticError("cannot open CSV file: " + path);
    return read_csv(in);
}

// --- summary -------------------------------------------------------------------

std::string write_summary(const Scenario& scenario, const SimulationTrace& trace,
                          const std::vector<std::string>& overrides) {
    std::ostringstream out;
    out << "scenario: " << scenario.name << "\n";

    std::string status = "ok";
    if (trace.fault) {
        switch (trace.fault->kind) {
            case Fault::Kind::Diverged: status = "diverged"; break;
            case Fault::Kind::Singular: status = "singular"; break;
            case Fault::Kind::WeightBlowup: status = "weight_blowup"; break;
        }
    }
    out << "status: " << status << "\n";
    if (trace.fault) {
        out << "diverged_at: " << fmt(trace.fault->t) << "\n";
        out << "fault: " << trace.fault->message << "\n";
    }

    out << "gamma: " << fmt(scenario.learning.gamma) << "\n";
    out << "mode: "
        << (scenario.learning.mode == LearningMode::Truncated ? "truncated" : "full")
        << "\n";
    out << "dt: " << fmt(scenario.dt) << "\n";
    out << "duration: " << fmt(scenario.duration) << "\n";
    out << "steps: " << trace.steps() << "\n";
    if (!overrides.empty()) {
        out << "overrides: ";
        for (std::size_t i = 0; i < overrides.size(); ++i) {
            if (i) out << ",";
            out << overrides[i];
        }
        out << "\n";
    }

    for (std::size_t i = 0; i < trace.logged_branches.size(); ++i) {
        if (trace.steps() == 0) break;
        const auto& key = trace.logged_branches[i];
        out << "final_" << scenario.branch_label(key) << ": "
            << fmt(trace.weights[i].back()) << "\n";
    }

    if (trace.steps() > 0) {
        const double end = trace.t.back();
        const double window = std::min(20.0, scenario.duration / 2.0);
        try {
            const Metrics head = metrics(trace, 0.0, window);
            const Metrics tail = metrics(trace, end - window, end);
            const Metrics whole = metrics(trace, 0.0, end);
            out << "window_seconds: " << fmt(window) << "\n";
            out << "first_window_rms: " << fmt(head.rms_error) << "\n";
            out << "final_window_rms: " << fmt(tail.rms_error) << "\n";
            const double ratio =
                head.rms_error > 0.0 ? tail.rms_error / head.rms_error : 0.0;
            out << "rms_ratio: " << fmt(ratio) << "\n";
            out << "converge_threshold: " << fmt(scenario.converge_ratio) << "\n";
            out << "converged: "
                << ((!trace.fault && ratio <= scenario.converge_ratio) ? "true" : "false")
                << "\n";
            out << "max_abs_error: " << fmt(whole.max_abs_error) << "\n";
            out << "max_abs_error_t: " << fmt(whole.max_abs_error_time) << "\n";
        } catch (const SemanticError&) {
            // trace too short for windowed statistics
        }
    }
    for (const auto& diag : trace.diagnostics) out << "note: " << diag << "\n";
    return out.str();
}

}  // namespace gsfg
