#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "pqe/harness.hpp"

namespace pqe::harness {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "n/a"; }

// Ordered rows: sequence -> component -> value, grouped by class in first-seen order.
struct Grid {
    std::vector<std::string> classes;
    std::map<std::string, std::vector<std::string>> sequences;  // class -> sequences
    std::map<std::pair<std::string, Component>, std::optional<double>> value;
};

Grid grid_of(const BDTable& t) {
    Grid g;
    for (const auto& c : t.cells) {
        if (!g.sequences.count(c.sequence_class)) g.classes.push_back(c.sequence_class);
        auto& seqs = g.sequences[c.sequence_class];
        if (std::find(seqs.begin(), seqs.end(), c.sequence) == seqs.end()) seqs.push_back(c.sequence);
        g.value[{c.sequence, c.component}] = c.bd_rate;
    }
    return g;
}

std::optional<double> mean_of(const Grid& g, const std::vector<std::string>& seqs, Component c) {
    double sum = 0.0;
    int n = 0;
    for (const auto& s : seqs) {
        const auto it = g.value.find({s, c});
        if (it == g.value.end() || !it->second) continue;
        sum += *it->second;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

std::vector<std::string> all_sequences(const Grid& g) {
    std::vector<std::string> all;
    for (const auto& cls : g.classes)
        for (const auto& s : g.sequences.at(cls)) all.push_back(s);
    return all;
}

std::string range_title(const BDTable& t) {
    std::string qps;
    for (std::size_t i = 0; i < t.qps.size(); ++i) qps += (i ? "," : "") + std::to_string(t.qps[i]);
    return (t.range == "ctc" ? "CTC QPs {" : "High QPs {") + qps + "}";
}

}  // namespace

std::string table_markdown(const BDTable& table, const std::vector<Component>& components) {
    const Grid g = grid_of(table);
    std::ostringstream os;
    os << "## BD-rate (%), " << range_title(table) << ", " << table.arm << "\n\n| Class | Sequence |";
    for (auto c : components) os << " " << to_string(c) << " |";
    os << "\n|---|---|";
    for (std::size_t i = 0; i < components.size(); ++i) os << "---:|";
    os << "\n";
    for (const auto& cls : g.classes) {
        for (const auto& s : g.sequences.at(cls)) {
            os << "| " << cls << " | " << s << " |";
            for (auto c : components) os << " " << fmt(g.value.at({s, c})) << " |";
            os << "\n";
        }
        os << "| " << cls << " | **Average** |";
        for (auto c : components) os << " " << fmt(mean_of(g, g.sequences.at(cls), c)) << " |";
        os << "\n";
    }
    os << "| **All** | **Overall** |";
    const auto all = all_sequences(g);
    for (auto c : components) os << " " << fmt(mean_of(g, all, c)) << " |";
    os << "\n";
    for (const auto& cell : table.cells)
        if (!cell.bd_rate) os << "\n- " << cell.sequence << " " << to_string(cell.component) << ": " << cell.error;
    os << "\n";
    return os.str();
}

std::string combined_markdown(const StatsReport& report, const std::vector<Component>& components) {
    std::ostringstream os;
    os << "# Quality-enhancement BD-rate summary\n\nNegative values are bitrate savings over the unenhanced "
          "codec.\n\n| Class | Sequence |";
    std::vector<std::pair<const BDTable*, Grid>> grids;
    for (const auto& t : report.tables) grids.emplace_back(&t, grid_of(t));
    for (const auto& [t, g] : grids)
        for (auto c : components) os << " " << t->range << " " << (t->arm == "with_prediction" ? "w/ pred" : "w/o pred")
                                     << " " << to_string(c) << " |";
    os << "\n|---|---|";
    for (std::size_t i = 0; i < grids.size() * components.size(); ++i) os << "---:|";
    os << "\n";
    if (!grids.empty()) {
        const Grid& first = grids.front().second;
        for (const auto& cls : first.classes) {
            for (const auto& s : first.sequences.at(cls)) {
                os << "| " << cls << " | " << s << " |";
                for (const auto& [t, g] : grids)
                    for (auto c : components) {
                        const auto it = g.value.find({s, c});
                        os << " " << (it == g.value.end() ? "n/a" : fmt(it->second)) << " |";
                    }
                os << "\n";
            }
            os << "| " << cls << " | **Average** |";
            for (const auto& [t, g] : grids)
                for (auto c : components) os << " " << fmt(mean_of(g, first.sequences.at(cls), c)) << " |";
            os << "\n";
        }
        os << "| **All** | **Overall** |";
        const auto all = all_sequences(first);
        for (const auto& [t, g] : grids)
            for (auto c : components) os << " " << fmt(mean_of(g, all, c)) << " |";
        os << "\n";
    }
    for (const auto& t : report.tables) os << "\n" << table_markdown(t, components);
    return os.str();
}

std::string report_csv(const StatsReport& report) {
    std::ostringstream os;
    os << "range,arm,class,sequence,component,bd_rate_percent\n";
    for (const auto& t : report.tables)
        for (const auto& c : t.cells)
            os << t.range << "," << t.arm << "," << c.sequence_class << "," << c.sequence << ","
               << to_string(c.component) << "," << (c.bd_rate ? fmt(*c.bd_rate) : "") << "\n";
    return os.str();
}

nlohmann::json report_json(const StatsReport& report) {
    using nlohmann::json;
    json cells = json::array();
    for (const auto& c : report.cells)
        cells.push_back({{"sequence", c.sequence},
                         {"class", c.sequence_class},
                         {"qp", c.qp},
                         {"component", std::string(to_string(c.component))},
                         {"bitrate", c.bitrate},
                         {"psnr_anchor", c.psnr_anchor},
                         {"psnr_with_prediction", c.psnr_with_pred},
                         {"psnr_without_prediction", c.psnr_without_pred}});
    json tables = json::array();
    for (const auto& t : report.tables) {
        json rows = json::array();
        for (const auto& c : t.cells) {
            json r = {{"sequence", c.sequence}, {"class", c.sequence_class}, {"component", std::string(to_string(c.component))}};
            if (c.bd_rate)
                r["bd_rate_percent"] = *c.bd_rate;
            else
                r["error"] = c.error;
            rows.push_back(std::move(r));
        }
        tables.push_back({{"range", t.range}, {"arm", t.arm}, {"qps", t.qps}, {"cells", rows}});
    }
    return {{"cells", cells}, {"tables", tables}};
}

}  // namespace pqe::harness
