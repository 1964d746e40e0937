#include "spader/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace spader {

namespace {

void check_records(std::span<const EvalRecord> records, const char* who) {
    std::size_t anomalies = 0;
    for (const EvalRecord& r : records) {
        if (!std::isfinite(r.score)) {
            throw std::invalid_argument(std::string(who) + ": non-finite score for image " +
                                        std::to_string(r.image_id));
        }
        anomalies += r.is_anomaly ? 1 : 0;
    }
    if (anomalies == 0 || anomalies == records.size()) {
        throw std::invalid_argument(std::string(who) + ": need at least one normal and one anomaly record");
    }
}

std::vector<std::size_t> order_by_score(std::span<const EvalRecord> records) {
    std::vector<std::size_t> idx(records.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return records[a].score < records[b].score; });
    return idx;
}

std::string fixed3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

double auroc(std::span<const EvalRecord> records) {
    check_records(records, "auroc");
    const auto idx = order_by_score(records);
    // Twice the normal rank sum, using midranks for tied groups; stays integral.
    std::uint64_t twice_rank_sum = 0;
    std::uint64_t normals = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && records[idx[j]].score == records[idx[i]].score) ++j;
        const std::uint64_t twice_midrank = (i + 1) + j;  // ranks i+1..j
        for (std::size_t k = i; k < j; ++k) {
            if (!records[idx[k]].is_anomaly) {
                twice_rank_sum += twice_midrank;
                ++normals;
            }
        }
        i = j;
    }
    const std::uint64_t anomalies = records.size() - normals;
    const std::uint64_t twice_u = twice_rank_sum - normals * (normals + 1);
    return static_cast<double>(twice_u) / static_cast<double>(2 * normals * anomalies);
}

std::vector<RocPoint> roc_curve(std::span<const EvalRecord> records) {
    check_records(records, "roc_curve");
    const auto idx = order_by_score(records);
    double normals = 0.0, anomalies = 0.0;
    for (const EvalRecord& r : records) (r.is_anomaly ? anomalies : normals) += 1.0;

    std::vector<RocPoint> curve{{0.0, 0.0}};
    std::size_t fp = 0, tp = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && records[idx[j]].score == records[idx[i]].score) {
            (records[idx[j]].is_anomaly ? tp : fp) += 1;
            ++j;
        }
        curve.push_back({static_cast<double>(fp) / normals, static_cast<double>(tp) / anomalies});
        i = j;
    }
    return curve;
}

double trapezoid_area(std::span<const RocPoint> curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
    }
    return area;
}

ConditionSummary summarize(std::span<const double> trials, Strategy strategy, int known_anomaly_digit) {
    if (trials.empty()) throw std::invalid_argument("summarize: no trials");
    ConditionSummary s;
    s.strategy = strategy;
    s.known_anomaly_digit = known_anomaly_digit;
    s.trials.assign(trials.begin(), trials.end());
    const double n = static_cast<double>(trials.size());
    // Shifted by the first trial so identical trials give exactly that value and std 0.
    double shift = 0.0;
    for (double t : trials) shift += t - trials[0];
    s.mean = trials[0] + shift / n;
    double ss = 0.0;
    for (double t : trials) ss += (t - s.mean) * (t - s.mean);
    s.std = std::sqrt(ss / n);
    return s;
}

std::string format_table(std::span<const ConditionSummary> summaries) {
    std::set<int> digits;
    std::map<std::pair<Strategy, int>, const ConditionSummary*> cell;
    for (const auto& s : summaries) {
        digits.insert(s.known_anomaly_digit);
        cell[{s.strategy, s.known_anomaly_digit}] = &s;
    }
    std::size_t name_width = 6;
    for (Strategy st : kAllStrategies) name_width = std::max(name_width, strategy_name(st).size());

    std::ostringstream out;
    auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.append(w - s.size(), ' ');
        return s;
    };
    constexpr std::size_t cell_width = 18;
    out << pad("method", name_width);
    for (int d : digits) out << "  " << pad("known=" + std::to_string(d), cell_width);
    out << '\n';
    for (Strategy st : kAllStrategies) {
        bool any = false;
        for (int d : digits) any = any || cell.count({st, d});
        if (!any) continue;
        out << pad(std::string(strategy_name(st)), name_width);
        for (int d : digits) {
            const auto it = cell.find({st, d});
            const std::string text =
                it == cell.end() ? "-" : fixed3(it->second->mean) + " \xC2\xB1 " + fixed3(it->second->std);
            // the ± sign is two bytes but one column
            out << "  " << pad(text, cell_width + (it == cell.end() ? 0 : 1));
        }
        out << '\n';
    }
    return out.str();
}

std::string format_csv(std::span<const ConditionSummary> summaries) {
    std::vector<const ConditionSummary*> rows;
    for (const auto& s : summaries) rows.push_back(&s);
    auto rank = [](Strategy s) {
        return std::find(kAllStrategies.begin(), kAllStrategies.end(), s) - kAllStrategies.begin();
    };
    std::stable_sort(rows.begin(), rows.end(), [&](const auto* a, const auto* b) {
        if (a->known_anomaly_digit != b->known_anomaly_digit) return a->known_anomaly_digit < b->known_anomaly_digit;
        return rank(a->strategy) < rank(b->strategy);
    });
    std::ostringstream out;
    out << "strategy,known_anomaly_digit,trials,mean,std,aurocs\n";
    for (const auto* s : rows) {
        out << strategy_name(s->strategy) << ',' << s->known_anomaly_digit << ',' << s->trials.size() << ','
            << full(s->mean) << ',' << full(s->std) << ',';
        for (std::size_t i = 0; i < s->trials.size(); ++i) out << (i ? ";" : "") << full(s->trials[i]);
        out << '\n';
    }
    return out.str();
}

}  // namespace spader
