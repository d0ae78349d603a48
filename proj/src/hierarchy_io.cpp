#include <cmath>

#include "hjh/correctors.hpp"
#include "hjh/errors.hpp"
#include "hjh/io.hpp"

namespace hjh {

namespace {

// Dense arrays of arbitrary shape: one (rows, cols) pair per item, then the
// column-major values. Empty items stand for invalid entries.
struct Packer {
    std::vector<double> shapes;
    std::vector<double> values;

    template <class Dense>
    void add(const Dense& a) {
        shapes.push_back(static_cast<double>(a.rows()));
        shapes.push_back(static_cast<double>(a.cols()));
        values.insert(values.end(), a.data(), a.data() + a.size());
    }
    Json json() const { return {{"shapes", encode_doubles(shapes)}, {"values", encode_doubles(values)}}; }
};

struct Unpacker {
    std::vector<double> shapes;
    std::vector<double> values;
    std::size_t item = 0;
    std::size_t offset = 0;

    explicit Unpacker(const Json& doc)
        : shapes(decode_doubles(doc.at("shapes").get<std::string>())),
          values(decode_doubles(doc.at("values").get<std::string>())) {}

    template <class Dense>
    Dense next() {
        if (2 * item + 1 >= shapes.size()) throw InvalidInput("hierarchy archive: truncated array");
        const auto r = static_cast<Eigen::Index>(shapes[2 * item]);
        const auto c = static_cast<Eigen::Index>(shapes[2 * item + 1]);
        ++item;
        if (offset + std::size_t(r * c) > values.size()) throw InvalidInput("hierarchy archive: truncated array");
        Dense a(r, c);
        std::copy_n(values.data() + offset, r * c, a.data());
        offset += std::size_t(r * c);
        return a;
    }
    void finish() const {
        if (2 * item != shapes.size() || offset != values.size())
            throw InvalidInput("hierarchy archive: array lengths do not match the header");
    }
};

Json vec_json(const Vec& v) {
    Json a = Json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Vec vec_from(const Json& a) {
    Vec v(static_cast<int>(a.size()));
    for (int i = 0; i < v.size(); ++i) v(i) = a.at(i).get<double>();
    return v;
}

using Scalar1 = Eigen::Matrix<double, 1, 1>;

template <class Range>
Json pack_scalars(const Range& r) {
    Packer p;
    for (double x : r) p.add(Scalar1(x));
    return p.json();
}

std::vector<double> unpack_scalars(const Json& doc, std::size_t count) {
    Unpacker u(doc);
    std::vector<double> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(u.next<Scalar1>()(0));
    u.finish();
    return out;
}

}  // namespace

void save_hierarchy(const CorrectorHierarchy& h, const std::filesystem::path& path) {
    const auto& d = h.data();
    const auto& sol = h.effective();
    const auto& s = h.slow();
    const int P = s.size();
    const int m = h.order();

    Json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["kind"] = "corrector-hierarchy";
    doc["problem"] = problem_to_json(h.spec());
    doc["initial_data"] = initial_data_to_json(sol.g());
    doc["table"] = table_to_json(sol.table());
    doc["effective"] = {{"window_lo", vec_json(sol.window().lo)},
                        {"window_hi", vec_json(sol.window().hi)},
                        {"T", sol.T()},
                        {"zeta_min", sol.options().zeta_min},
                        {"source_dx", sol.options().source_dx},
                        {"time_samples", sol.options().time_samples}};
    doc["N"] = h.grid().N();
    doc["slow"] = {{"dim", s.dim}, {"lo", vec_json(s.lo)}, {"hx", s.hx}, {"counts", {s.counts[0], s.counts[1]}},
                   {"T", s.T},     {"nt", s.nt}};
    doc["m"] = m;
    doc["encoding"] = "base64-f64le";

    Json data;
    Packer p0, hess0, bbar, source, B, chi;
    for (int i = 0; i < P; ++i) {
        p0.add(d.p0[i]);
        hess0.add(d.hess0[i]);
        bbar.add(d.bbar[i]);
        source.add(d.source[i]);
        B.add(d.B[i]);
        chi.add(Scalar1(static_cast<double>(d.chi[i].size())));
        for (const Field& f : d.chi[i]) chi.add(f);
    }
    data["p0"] = p0.json();
    data["hess0"] = hess0.json();
    data["gamma"] = pack_scalars(d.gamma);
    data["bbar"] = bbar.json();
    data["source"] = source.json();
    data["B"] = B.json();
    data["chi"] = chi.json();
    for (int k = 0; k <= m; ++k) {
        Packer phi, wt, dx;
        for (int i = 0; i < P; ++i) {
            phi.add(d.phi[k][i]);
            wt.add(d.wt[k][i]);
            dx.add(d.dxubar[k][i]);
        }
        Json level;
        level["phi"] = phi.json();
        level["wt"] = wt.json();
        level["dxubar"] = dx.json();
        level["ubar"] = pack_scalars(d.ubar[k]);
        level["dtubar"] = pack_scalars(d.dtubar[k]);
        level["fbar"] = pack_scalars(d.fbar[k]);
        data["levels"].push_back(std::move(level));
    }
    doc["data"] = std::move(data);
    write_json(doc, path);
}

CorrectorHierarchy load_hierarchy(const std::filesystem::path& path) {
    const Json doc = read_json(path);
    require_schema(doc, "hierarchy archive");
    if (doc.value("kind", "") != "corrector-hierarchy")
        throw InvalidInput("hierarchy archive: kind must be corrector-hierarchy");
    ProblemSpec spec = problem_from_json(doc.at("problem"));
    InitialData g = initial_data_from_json(doc.at("initial_data"), spec.dim);
    auto table = std::make_shared<const EffectiveTable>(table_from_json(doc.at("table")));
    const Json& e = doc.at("effective");
    EffectiveOptions eo;
    eo.zeta_min = e.at("zeta_min").get<double>();
    eo.source_dx = e.at("source_dx").get<double>();
    eo.time_samples = e.at("time_samples").get<int>();
    auto sol = std::make_shared<const EffectiveSolution>(
        g, table, Box{vec_from(e.at("window_lo")), vec_from(e.at("window_hi"))}, e.at("T").get<double>(), eo);

    SlowGrid s;
    const Json& sj = doc.at("slow");
    s.dim = sj.at("dim").get<int>();
    s.lo = vec_from(sj.at("lo"));
    s.hx = sj.at("hx").get<double>();
    s.counts = {sj.at("counts").at(0).get<int>(), sj.at("counts").at(1).get<int>()};
    s.T = sj.at("T").get<double>();
    s.nt = sj.at("nt").get<int>();
    const int m = doc.at("m").get<int>();
    const auto P = static_cast<std::size_t>(s.size());

    const Json& dj = doc.at("data");
    CorrectorHierarchy::Data d;
    {
        Unpacker p0(dj.at("p0")), hess0(dj.at("hess0")), bbar(dj.at("bbar")), source(dj.at("source")), B(dj.at("B")),
            chi(dj.at("chi"));
        for (std::size_t i = 0; i < P; ++i) {
            d.p0.push_back(p0.next<Vec>());
            d.hess0.push_back(hess0.next<Mat>());
            d.bbar.push_back(bbar.next<Vec>());
            d.source.push_back(source.next<Vec>());
            d.B.push_back(B.next<Eigen::MatrixXd>());
            const int axes = static_cast<int>(chi.next<Scalar1>()(0));
            std::vector<Field> c;
            for (int a = 0; a < axes; ++a) c.push_back(chi.next<Field>());
            d.chi.push_back(std::move(c));
        }
        for (const Unpacker* u : {&p0, &hess0, &bbar, &source, &B, &chi}) u->finish();
    }
    d.gamma = unpack_scalars(dj.at("gamma"), P);
    const Json& levels = dj.at("levels");
    if (!levels.is_array() || static_cast<int>(levels.size()) != m + 1)
        throw InvalidInput("hierarchy archive: expected m + 1 levels");
    for (int k = 0; k <= m; ++k) {
        const Json& lv = levels.at(k);
        Unpacker phi(lv.at("phi")), wt(lv.at("wt")), dx(lv.at("dxubar"));
        std::vector<Field> pk, wk;
        std::vector<Vec> dk;
        for (std::size_t i = 0; i < P; ++i) {
            pk.push_back(phi.next<Field>());
            wk.push_back(wt.next<Field>());
            dk.push_back(dx.next<Vec>());
        }
        phi.finish();
        wt.finish();
        dx.finish();
        d.phi.push_back(std::move(pk));
        d.wt.push_back(std::move(wk));
        d.dxubar.push_back(std::move(dk));
        d.ubar.push_back(unpack_scalars(lv.at("ubar"), P));
        d.dtubar.push_back(unpack_scalars(lv.at("dtubar"), P));
        d.fbar.push_back(unpack_scalars(lv.at("fbar"), P));
    }
    return CorrectorHierarchy(std::move(sol), std::move(spec), TorusGrid(s.dim, doc.at("N").get<int>()), std::move(s), m,
                              std::move(d));
}

}  // namespace hjh
