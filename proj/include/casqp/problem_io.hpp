#pragma once

#include "casqp/problem.hpp"

#include <json.hpp>

#include <fstream>
#include <string>

namespace casqp {

inline constexpr const char* kProblemFormat = "cascade-qp/1";
inline constexpr const char* kSolutionFormat = "cascade-qp-solution/1";

namespace io_detail {

using nlohmann::json;

inline const json& require(const json& obj, const char* field, const std::string& where) {
    if (!obj.is_object() || !obj.contains(field))
        throw ParseError(where + ": missing field \"" + field + "\"");
    return obj.at(field);
}

template <typename Scalar>
VectorX<Scalar> read_vector(const json& arr, const std::string& where) {
    if (!arr.is_array()) throw ParseError(where + ": expected an array of numbers");
    VectorX<Scalar> v(arr.size());
    for (size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number()) throw ParseError(where + ": entry is not a number");
        v(Index(i)) = Scalar(arr[i].get<double>());
    }
    return v;
}

template <typename Scalar>
MatrixX<Scalar> read_matrix(const json& arr, const std::string& where) {
    if (!arr.is_array()) throw ParseError(where + ": expected an array of rows");
    const size_t rows = arr.size();
    size_t cols = 0;
    if (rows > 0) {
        if (!arr[0].is_array()) throw ParseError(where + ": row is not an array");
        cols = arr[0].size();
    }
    MatrixX<Scalar> m(rows, cols);
    for (size_t i = 0; i < rows; ++i) {
        if (!arr[i].is_array() || arr[i].size() != cols)
            throw ParseError(where + ": ragged rows");
        for (size_t jj = 0; jj < cols; ++jj) {
            if (!arr[i][jj].is_number()) throw ParseError(where + ": entry is not a number");
            m(Index(i), Index(jj)) = Scalar(arr[i][jj].get<double>());
        }
    }
    return m;
}

template <typename Scalar>
json write_vector(const VectorX<Scalar>& v) {
    json arr = json::array();
    for (Index i = 0; i < v.size(); ++i) arr.push_back(double(v(i)));
    return arr;
}

template <typename Scalar>
json write_matrix(const MatrixX<Scalar>& m) {
    json arr = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index jj = 0; jj < m.cols(); ++jj) row.push_back(double(m(i, jj)));
        arr.push_back(std::move(row));
    }
    return arr;
}

} // namespace io_detail

/// Serializes a problem as a single JSON document (format "cascade-qp/1").
/// Matrices are row-major arrays of arrays; doubles use the shortest
/// representation that round-trips exactly.
template <typename Scalar>
void save_problem(const CascadeProblem<Scalar>& problem, const std::string& path) {
    using io_detail::json;
    json doc;
    doc["format"] = kProblemFormat;
    doc["T"] = problem.T;
    json subs = json::array();
    for (const auto& s : problem.subsystems) {
        json js;
        js["j"] = s.j;
        js["n"] = s.n;
        js["m"] = s.m;
        js["nu"] = s.nu;
        js["xi"] = io_detail::write_vector(s.xi);
        json stages = json::array();
        for (const auto& st : s.stages) {
            json jt;
            jt["A"] = io_detail::write_matrix(st.A);
            jt["B"] = io_detail::write_matrix(st.B);
            if (st.E.size()) jt["E"] = io_detail::write_matrix(st.E);
            jt["Q"] = io_detail::write_matrix(st.Q);
            jt["S"] = io_detail::write_matrix(st.S);
            jt["R"] = io_detail::write_matrix(st.R);
            jt["M"] = io_detail::write_matrix(st.M);
            jt["L"] = io_detail::write_matrix(st.L);
            jt["c"] = io_detail::write_vector(st.c);
            stages.push_back(std::move(jt));
        }
        js["stages"] = std::move(stages);
        js["terminal"] = {{"P", io_detail::write_matrix(s.terminal.P)},
                          {"M", io_detail::write_matrix(s.terminal.M)},
                          {"c", io_detail::write_vector(s.terminal.c)}};
        subs.push_back(std::move(js));
    }
    doc["subsystems"] = std::move(subs);

    std::ofstream out(path);
    if (!out) throw ParseError("cannot open \"" + path + "\" for writing");
    out << doc.dump(1) << "\n";
}

/// Loads a problem file, checking the schema field by field; structural and
/// definiteness invariants are deferred to validate().
template <typename Scalar>
CascadeProblem<Scalar> load_problem(const std::string& path) {
    using io_detail::json;
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open \"" + path + "\"");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ParseError(std::string("\"") + path + "\": " + e.what());
    }

    const std::string where = "problem file";
    const std::string format = io_detail::require(doc, "format", where).get<std::string>();
    if (format != kProblemFormat)
        throw ParseError(where + ": unsupported format \"" + format + "\"");

    CascadeProblem<Scalar> problem;
    problem.T = io_detail::require(doc, "T", where).get<Index>();
    const json& subs = io_detail::require(doc, "subsystems", where);
    if (!subs.is_array()) throw ParseError(where + ": \"subsystems\" must be an array");

    for (size_t idx = 0; idx < subs.size(); ++idx) {
        const json& js = subs[idx];
        const std::string sw = "subsystems[" + std::to_string(idx) + "]";
        SubsystemModel<Scalar> s;
        s.j = io_detail::require(js, "j", sw).get<int>();
        s.n = io_detail::require(js, "n", sw).get<Index>();
        s.m = io_detail::require(js, "m", sw).get<Index>();
        s.nu = io_detail::require(js, "nu", sw).get<Index>();
        s.xi = io_detail::read_vector<Scalar>(io_detail::require(js, "xi", sw), sw + ".xi");

        const json& stages = io_detail::require(js, "stages", sw);
        if (!stages.is_array() || Index(stages.size()) != problem.T)
            throw ParseError(sw + ": \"stages\" must be an array of length T");
        for (size_t ti = 0; ti < stages.size(); ++ti) {
            const json& jt = stages[ti];
            const std::string tw = sw + ".stages[" + std::to_string(ti) + "]";
            StageData<Scalar> st;
            st.A = io_detail::read_matrix<Scalar>(io_detail::require(jt, "A", tw), tw + ".A");
            st.B = io_detail::read_matrix<Scalar>(io_detail::require(jt, "B", tw), tw + ".B");
            if (jt.contains("E")) {
                if (idx == 0) throw ParseError(tw + ": E forbidden at j=1");
                st.E = io_detail::read_matrix<Scalar>(jt.at("E"), tw + ".E");
            } else if (idx > 0) {
                throw ParseError(tw + ": missing field \"E\"");
            }
            st.Q = io_detail::read_matrix<Scalar>(io_detail::require(jt, "Q", tw), tw + ".Q");
            st.S = io_detail::read_matrix<Scalar>(io_detail::require(jt, "S", tw), tw + ".S");
            st.R = io_detail::read_matrix<Scalar>(io_detail::require(jt, "R", tw), tw + ".R");
            st.M = io_detail::read_matrix<Scalar>(io_detail::require(jt, "M", tw), tw + ".M");
            st.L = io_detail::read_matrix<Scalar>(io_detail::require(jt, "L", tw), tw + ".L");
            st.c = io_detail::read_vector<Scalar>(io_detail::require(jt, "c", tw), tw + ".c");
            s.stages.push_back(std::move(st));
        }

        const json& jterm = io_detail::require(js, "terminal", sw);
        const std::string twt = sw + ".terminal";
        s.terminal.P =
            io_detail::read_matrix<Scalar>(io_detail::require(jterm, "P", twt), twt + ".P");
        s.terminal.M =
            io_detail::read_matrix<Scalar>(io_detail::require(jterm, "M", twt), twt + ".M");
        s.terminal.c =
            io_detail::read_vector<Scalar>(io_detail::require(jterm, "c", twt), twt + ".c");
        problem.subsystems.push_back(std::move(s));
    }
    return problem;
}

/// Solution document: objective, exit state and per-sub-system trajectory
/// and multipliers, with the same matrix/vector conventions as the problem
/// format.
template <typename Scalar, typename Report>
void save_solution(const Report& report, const std::string& path) {
    using io_detail::json;
    json doc;
    doc["format"] = kSolutionFormat;
    doc["status"] = to_string(report.status);
    doc["objective"] = double(report.objective);
    doc["final_mu"] = double(report.final_mu);
    doc["iterations"] = report.iterations.empty() ? 0 : report.iterations.back().k;
    json subs = json::array();
    for (size_t j = 0; j < report.final_iterate.sub.size(); ++j) {
        const auto& pt = report.final_iterate.sub[j];
        json js;
        js["j"] = int(j + 1);
        js["x"] = io_detail::write_vector(pt.x);
        js["u"] = io_detail::write_vector(pt.u);
        js["p"] = io_detail::write_vector(pt.p);
        js["lambda"] = io_detail::write_vector(pt.lambda);
        js["theta"] = io_detail::write_vector(pt.theta);
        subs.push_back(std::move(js));
    }
    doc["subsystems"] = std::move(subs);
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open \"" + path + "\" for writing");
    out << doc.dump(1) << "\n";
}

/// Reads back the trajectory part of a solution file.
template <typename Scalar>
std::pair<double, std::vector<std::pair<VectorX<Scalar>, VectorX<Scalar>>>> load_solution_trajectory(
    const std::string& path) {
    using io_detail::json;
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open \"" + path + "\"");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ParseError(std::string("\"") + path + "\": " + e.what());
    }
    const std::string where = "solution file";
    const std::string format = io_detail::require(doc, "format", where).get<std::string>();
    if (format != kSolutionFormat)
        throw ParseError(where + ": unsupported format \"" + format + "\"");
    const double obj = io_detail::require(doc, "objective", where).get<double>();
    std::vector<std::pair<VectorX<Scalar>, VectorX<Scalar>>> traj;
    for (const auto& js : io_detail::require(doc, "subsystems", where)) {
        traj.emplace_back(io_detail::read_vector<Scalar>(io_detail::require(js, "x", where), where),
                          io_detail::read_vector<Scalar>(io_detail::require(js, "u", where), where));
    }
    return {obj, std::move(traj)};
}

} // namespace casqp
