#include "hjh/io.hpp"

#include <bit>
#include <boost/beast/core/detail/base64.hpp>
#include <cstring>
#include <fstream>

#include "hjh/errors.hpp"

namespace hjh {

namespace {

namespace fs = std::filesystem;

const Json& field(const Json& doc, const char* key, const std::string& where) {
    if (!doc.is_object() || !doc.contains(key)) throw InvalidInput(where + ": missing field \"" + key + "\"");
    return doc.at(key);
}

double number(const Json& doc, const char* key, const std::string& where) {
    const Json& v = field(doc, key, where);
    if (!v.is_number()) throw InvalidInput(where + ": field \"" + key + "\" must be a number");
    return v.get<double>();
}

double number_or(const Json& doc, const char* key, double fallback) {
    if (!doc.contains(key)) return fallback;
    if (!doc.at(key).is_number()) throw InvalidInput(std::string("field \"") + key + "\" must be a number");
    return doc.at(key).get<double>();
}

Vec vec_from_json(const Json& a, int n, const std::string& where) {
    if (!a.is_array() || static_cast<int>(a.size()) != n)
        throw InvalidInput(where + ": expected an array of " + std::to_string(n) + " numbers");
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = a.at(i).get<double>();
    return v;
}

Json vec_to_json(const Vec& v) {
    Json a = Json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

std::vector<std::vector<TrigSeries>> matrix_from_json(const Json& a, int n, const std::string& where) {
    if (!a.is_array() || static_cast<int>(a.size()) != n) throw InvalidInput(where + ": expected " + std::to_string(n) + " rows");
    std::vector<std::vector<TrigSeries>> m(n, std::vector<TrigSeries>(n));
    for (int i = 0; i < n; ++i) {
        const Json& row = a.at(i);
        if (!row.is_array() || static_cast<int>(row.size()) != n)
            throw InvalidInput(where + ": expected " + std::to_string(n) + " columns");
        // Only the upper triangle is read; symmetric matrices are implied.
        for (int j = i; j < n; ++j) m[i][j] = series_from_json(row.at(j), n);
        for (int j = 0; j < i; ++j) m[i][j] = m[j][i];
    }
    return m;
}

Json matrix_to_json(int n, const std::function<const TrigSeries&(int, int)>& at) {
    Json a = Json::array();
    for (int i = 0; i < n; ++i) {
        Json row = Json::array();
        for (int j = 0; j < n; ++j) row.push_back(series_to_json(at(i, j)));
        a.push_back(row);
    }
    return a;
}

}  // namespace

void require_schema(const Json& doc, const std::string& what) {
    if (!doc.is_object()) throw InvalidInput(what + ": document must be a JSON object");
    if (!doc.contains("schema_version")) throw InvalidInput(what + ": missing schema_version");
    const int v = doc.at("schema_version").get<int>();
    if (v != kSchemaVersion)
        throw InvalidInput(what + ": unsupported schema_version " + std::to_string(v) + " (expected " +
                           std::to_string(kSchemaVersion) + ")");
}

TrigSeries series_from_json(const Json& doc, int dim) {
    if (doc.is_number()) return TrigSeries(doc.get<double>());
    if (!doc.is_object()) throw InvalidInput("series: expected a number or an object");
    const double c = number_or(doc, "constant", 0.0);
    std::vector<TrigSeries::Term> terms;
    if (doc.contains("terms")) {
        for (const Json& t : doc.at("terms")) {
            TrigSeries::Term term;
            const Json& k = field(t, "k", "series term");
            if (k.is_number()) {
                term.k = {k.get<int>()};
            } else {
                term.k = k.get<std::vector<int>>();
            }
            if (static_cast<int>(term.k.size()) != dim)
                throw InvalidInput("series term: wave vector needs " + std::to_string(dim) + " components");
            term.cos_coef = number_or(t, "cos", 0.0);
            term.sin_coef = number_or(t, "sin", 0.0);
            terms.push_back(std::move(term));
        }
    }
    return TrigSeries(c, std::move(terms));
}

Json series_to_json(const TrigSeries& s) {
    if (s.is_constant()) return s.constant();
    Json terms = Json::array();
    for (const auto& t : s.terms()) terms.push_back({{"k", t.k}, {"cos", t.cos_coef}, {"sin", t.sin_coef}});
    return {{"constant", s.constant()}, {"terms", terms}};
}

InitialData initial_data_from_json(const Json& doc, int dim) {
    const std::string fam = field(doc, "family", "initial_data").get<std::string>();
    if (fam == "affine") return InitialData::affine(vec_from_json(field(doc, "slope", "initial_data"), dim, "slope"));
    if (fam == "logcosh-ramp") {
        const Json& axes = field(doc, "axes", "initial_data");
        if (!axes.is_array() || static_cast<int>(axes.size()) != dim)
            throw InvalidInput("initial_data: logcosh-ramp needs one axis entry per dimension");
        std::vector<RampAxis> out;
        for (const Json& a : axes)
            out.push_back({number(a, "p_minus", "ramp axis"), number(a, "p_plus", "ramp axis"), number(a, "sigma", "ramp axis")});
        return InitialData::logcosh_ramp(std::move(out));
    }
    throw InvalidInput("initial_data: unknown family \"" + fam + "\" (expected affine or logcosh-ramp)");
}

Json initial_data_to_json(const InitialData& g) {
    switch (g.family()) {
        case InitialData::Family::affine: return {{"family", "affine"}, {"slope", vec_to_json(g.slope())}};
        case InitialData::Family::logcosh_ramp: {
            Json axes = Json::array();
            for (const auto& a : g.axes()) axes.push_back({{"p_minus", a.p_minus}, {"p_plus", a.p_plus}, {"sigma", a.sigma}});
            return {{"family", "logcosh-ramp"}, {"axes", axes}};
        }
        case InitialData::Family::custom: break;
    }
    throw InvalidInput("initial_data: custom data cannot be serialized");
}

ProblemSpec problem_from_json(const Json& doc) {
    require_schema(doc, "problem");
    ProblemSpec spec;
    spec.dim = field(doc, "dim", "problem").get<int>();
    if (spec.dim != 1 && spec.dim != 2) throw InvalidInput("problem: dim must be 1 or 2, got " + std::to_string(spec.dim));
    const int n = spec.dim;

    if (!doc.contains("diffusion") || doc.at("diffusion") == "identity") {
        spec.A = Diffusion::identity(n);
    } else {
        spec.A = Diffusion(n, matrix_from_json(field(doc.at("diffusion"), "entries", "diffusion"), n, "diffusion"));
    }

    const Json& h = field(doc, "hamiltonian", "problem");
    const std::string fam = field(h, "family", "hamiltonian").get<std::string>();
    const TrigSeries V = h.contains("V") ? series_from_json(h.at("V"), n) : TrigSeries(0.0);
    if (fam == "separable-quadratic") {
        std::vector<TrigSeries> b;
        if (h.contains("b")) {
            if (!h.at("b").is_array() || static_cast<int>(h.at("b").size()) != n)
                throw InvalidInput("hamiltonian: b needs one series per dimension");
            for (const Json& s : h.at("b")) b.push_back(series_from_json(s, n));
        }
        spec.H = QuadraticHamiltonian::separable(n, number_or(h, "c", 1.0), std::move(b), V);
    } else if (fam == "anisotropic-quadratic") {
        spec.H = QuadraticHamiltonian::anisotropic(n, matrix_from_json(field(h, "M", "hamiltonian"), n, "M"), V);
    } else {
        throw InvalidInput("hamiltonian: unknown family \"" + fam + "\"");
    }

    if (doc.contains("bounds")) {
        const Json& b = doc.at("bounds");
        auto& o = spec.bounds;
        o.lambda = number_or(b, "lambda", o.lambda);
        o.Lambda = number_or(b, "Lambda", o.Lambda);
        o.alpha = number_or(b, "alpha", o.alpha);
        o.alpha_prime = number_or(b, "alpha_prime", o.alpha_prime);
        o.beta = number_or(b, "beta", o.beta);
        o.beta_prime = number_or(b, "beta_prime", o.beta_prime);
        o.K = number_or(b, "K", o.K);
        o.L = number_or(b, "L", o.L);
    }
    if (doc.contains("initial_data")) spec.g = initial_data_from_json(doc.at("initial_data"), n);
    if (doc.contains("k_max")) spec.k_max = doc.at("k_max").get<int>();
    spec.check();
    return spec;
}

Json problem_to_json(const ProblemSpec& spec) {
    const int n = spec.dim;
    Json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["dim"] = n;
    doc["diffusion"] = {{"entries", matrix_to_json(n, [&](int i, int j) -> const TrigSeries& { return spec.A.entry(i, j); })}};
    auto q = std::dynamic_pointer_cast<const QuadraticHamiltonian>(spec.H);
    if (!q) throw InvalidInput("problem: only builtin Hamiltonian families can be serialized");
    Json h;
    h["family"] = q->family();
    h["V"] = series_to_json(q->potential());
    if (q->family() == "separable-quadratic") {
        h["c"] = q->c();
        Json b = Json::array();
        for (const auto& s : q->drift()) b.push_back(series_to_json(s));
        h["b"] = b;
    } else {
        h["M"] = matrix_to_json(n, [&](int i, int j) -> const TrigSeries& { return q->matrix()[i][j]; });
    }
    doc["hamiltonian"] = h;
    const auto& b = spec.bounds;
    doc["bounds"] = {{"lambda", b.lambda}, {"Lambda", b.Lambda}, {"alpha", b.alpha}, {"alpha_prime", b.alpha_prime},
                     {"beta", b.beta},     {"beta_prime", b.beta_prime}, {"K", b.K}, {"L", b.L}};
    if (spec.g) doc["initial_data"] = initial_data_to_json(*spec.g);
    doc["k_max"] = spec.k_max;
    return doc;
}

Json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw InvalidInput(path.string() + ": " + e.what());
    }
}

void write_json(const Json& doc, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw Error("write failed for " + path.string());
}

ProblemSpec load_problem(const fs::path& path) { return problem_from_json(read_json(path)); }

// ---------------------------------------------------------------------------

std::string encode_doubles(const std::vector<double>& v) {
    namespace b64 = boost::beast::detail::base64;
    std::vector<unsigned char> bytes(v.size() * 8);
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::uint64_t u = std::bit_cast<std::uint64_t>(v[i]);
        for (int b = 0; b < 8; ++b) bytes[8 * i + b] = static_cast<unsigned char>(u >> (8 * b));
    }
    std::string out(b64::encoded_size(bytes.size()), '\0');
    out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
    return out;
}

std::vector<double> decode_doubles(const std::string& s) {
    namespace b64 = boost::beast::detail::base64;
    std::vector<unsigned char> bytes(b64::decoded_size(s.size()));
    // The decoder stops at the padding, which may be up to two '=' characters.
    std::size_t body = s.size();
    while (body > 0 && s.size() - body < 2 && s[body - 1] == '=') --body;
    const auto [written, read] = b64::decode(bytes.data(), s.data(), s.size());
    if (read != body || s.size() % 4 != 0 || written % 8 != 0) throw InvalidInput("table: malformed base64 array");
    std::vector<double> v(written / 8);
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::uint64_t u = 0;
        for (int b = 0; b < 8; ++b) u |= std::uint64_t(bytes[8 * i + b]) << (8 * b);
        v[i] = std::bit_cast<double>(u);
    }
    return v;
}

Json table_to_json(const EffectiveTable& table) {
    const TableData& d = table.data();
    const int nodes = table.nodes();
    const int size = table.grid().size();
    std::vector<double> bbar, w, v, iters, resid;
    bbar.reserve(std::size_t(nodes) * d.dim);
    w.reserve(std::size_t(nodes) * size);
    v.reserve(std::size_t(nodes) * size * d.dim);
    for (int i = 0; i < nodes; ++i) {
        for (int a = 0; a < d.dim; ++a) bbar.push_back(d.bbar[i](a));
        w.insert(w.end(), d.w[i].data(), d.w[i].data() + size);
        for (int a = 0; a < d.dim; ++a) v.insert(v.end(), d.v[i][a].data(), d.v[i][a].data() + size);
        iters.push_back(d.diag[i].iterations);
        resid.push_back(d.diag[i].residual);
    }
    Json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["kind"] = "effective-table";
    doc["dim"] = d.dim;
    doc["N"] = d.N;
    doc["lo"] = vec_to_json(d.lo);
    doc["dp"] = d.dp;
    doc["counts"] = {d.counts[0], d.counts[1]};
    doc["encoding"] = "base64-f64le";
    doc["hbar"] = encode_doubles(d.hbar);
    doc["bbar"] = encode_doubles(bbar);
    doc["w"] = encode_doubles(w);
    doc["v"] = encode_doubles(v);
    doc["iterations"] = encode_doubles(iters);
    doc["residual"] = encode_doubles(resid);
    return doc;
}

EffectiveTable table_from_json(const Json& doc) {
    require_schema(doc, "table");
    if (doc.value("kind", "") != "effective-table") throw InvalidInput("table: kind must be effective-table");
    TableData d;
    d.dim = doc.at("dim").get<int>();
    d.N = doc.at("N").get<int>();
    d.lo = vec_from_json(doc.at("lo"), d.dim, "table lo");
    d.dp = doc.at("dp").get<double>();
    d.counts = {doc.at("counts").at(0).get<int>(), doc.at("counts").at(1).get<int>()};
    const int nodes = d.dim == 1 ? d.counts[0] : d.counts[0] * d.counts[1];
    const int size = TorusGrid(d.dim, d.N).size();
    d.hbar = decode_doubles(doc.at("hbar").get<std::string>());
    const auto bbar = decode_doubles(doc.at("bbar").get<std::string>());
    const auto w = decode_doubles(doc.at("w").get<std::string>());
    const auto v = decode_doubles(doc.at("v").get<std::string>());
    const auto iters = decode_doubles(doc.at("iterations").get<std::string>());
    const auto resid = decode_doubles(doc.at("residual").get<std::string>());
    const std::size_t un = static_cast<std::size_t>(nodes);
    if (d.hbar.size() != un || bbar.size() != un * d.dim || w.size() != un * size ||
        v.size() != un * size * d.dim || iters.size() != un || resid.size() != un)
        throw InvalidInput("table: array lengths do not match the header");
    for (int i = 0; i < nodes; ++i) {
        Vec b(d.dim);
        for (int a = 0; a < d.dim; ++a) b(a) = bbar[std::size_t(i) * d.dim + a];
        d.bbar.push_back(b);
        d.w.push_back(Eigen::Map<const Field>(w.data() + std::size_t(i) * size, size));
        std::vector<Field> vi;
        for (int a = 0; a < d.dim; ++a)
            vi.push_back(Eigen::Map<const Field>(v.data() + (std::size_t(i) * d.dim + a) * size, size));
        d.v.push_back(std::move(vi));
        d.diag.push_back({static_cast<int>(iters[i]), resid[i]});
    }
    return EffectiveTable(std::move(d));
}

void save_table(const EffectiveTable& table, const fs::path& path) { write_json(table_to_json(table), path); }

EffectiveTable load_table(const fs::path& path) { return table_from_json(read_json(path)); }

}  // namespace hjh
