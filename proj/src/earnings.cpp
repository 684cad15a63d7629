#include "mobilab/earnings.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mobilab {

namespace {

std::array<double, 4> basis(int age, int year) {
    const double a = age - 40;
    const double t = year - 2000;
    return {a, a * a, t, t * t};
}

}  // namespace

std::vector<EarningsPanelRow> estimation_rows(std::span<const EarningsPanelRow> panel,
                                              const FeOptions& options) {
    std::vector<EarningsPanelRow> rows;
    rows.reserve(panel.size());
    for (const auto& row : panel) {
        if (row.age != row.year - row.birth_year)
            throw validation_error("panel row for person " + std::to_string(row.person_id) +
                                   ": age does not equal year - birth_year");
        if (row.below_floor || row.age < options.age_min || row.age > options.age_max) continue;
        if (!std::isfinite(row.log_earnings))
            throw validation_error("non-finite log earnings for person " + std::to_string(row.person_id));
        rows.push_back(row);
    }
    return rows;
}

FeModel fit_fe_model(std::span<const EarningsPanelRow> panel, const FeOptions& options) {
    const std::vector<EarningsPanelRow> rows = estimation_rows(panel, options);
    if (rows.empty()) throw analysis_error("earnings panel has no usable rows");

    FeModel model;
    model.n_rows = rows.size();
    model.year_min = rows.front().year;
    model.year_max = rows.front().year;

    // Persons in first-appearance order.
    std::unordered_map<std::uint64_t, std::size_t> person_index;
    std::vector<std::vector<std::size_t>> person_rows;
    std::vector<int> person_group;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        model.year_min = std::min(model.year_min, row.year);
        model.year_max = std::max(model.year_max, row.year);
        auto [it, inserted] = person_index.try_emplace(row.person_id, person_rows.size());
        if (inserted) {
            person_rows.emplace_back();
            person_group.push_back(group_key(row.gender, row.edu_group));
        } else if (person_group[it->second] != group_key(row.gender, row.edu_group)) {
            throw validation_error("person " + std::to_string(row.person_id) +
                                   " changes gender or education group within the panel");
        }
        person_rows[it->second].push_back(i);
    }
    model.n_persons = person_rows.size();

    std::map<int, std::vector<std::size_t>> group_persons;
    for (std::size_t p = 0; p < person_rows.size(); ++p) group_persons[person_group[p]].push_back(p);

    std::vector<double> raw_effect(person_rows.size(), 0.0);
    std::vector<double> fitted_profile(rows.size(), 0.0);

    for (const auto& [key, persons] : group_persons) {
        GroupFit fit;
        fit.n_persons = persons.size();
        std::size_t n = 0;
        for (std::size_t p : persons) n += person_rows[p].size();
        fit.n_rows = n;

        Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 4);
        Eigen::VectorXd y(static_cast<Eigen::Index>(n));
        Eigen::Index r = 0;
        for (std::size_t p : persons) {
            const auto& idx = person_rows[p];
            std::array<double, 4> mx{};
            double my = 0.0;
            for (std::size_t i : idx) {
                const auto b = basis(rows[i].age, rows[i].year);
                for (int j = 0; j < 4; ++j) mx[static_cast<std::size_t>(j)] += b[static_cast<std::size_t>(j)];
                my += rows[i].log_earnings;
            }
            const double m = static_cast<double>(idx.size());
            for (auto& v : mx) v /= m;
            my /= m;
            for (std::size_t i : idx) {
                const auto b = basis(rows[i].age, rows[i].year);
                for (int j = 0; j < 4; ++j)
                    X(r, j) = b[static_cast<std::size_t>(j)] - mx[static_cast<std::size_t>(j)];
                y(r) = rows[i].log_earnings - my;
                ++r;
            }
        }

        // Sequential rank check in the order age, age2, year, year2: a term
        // is kept when it is not (numerically) spanned by the kept ones.
        std::vector<int> kept;
        Eigen::MatrixXd Q(X.rows(), 0);
        for (int j = 0; j < 4; ++j) {
            Eigen::VectorXd v = X.col(j);
            const double norm0 = v.norm();
            for (Eigen::Index q = 0; q < Q.cols(); ++q) v -= Q.col(q).dot(v) * Q.col(q);
            for (Eigen::Index q = 0; q < Q.cols(); ++q) v -= Q.col(q).dot(v) * Q.col(q);
            const double norm1 = v.norm();
            if (norm0 > 0.0 && norm1 > options.collinearity_tolerance * std::max(1.0, norm0)) {
                kept.push_back(j);
                Q.conservativeResize(Eigen::NoChange, Q.cols() + 1);
                Q.col(Q.cols() - 1) = v / norm1;
            } else {
                fit.dropped_terms.emplace_back(kProfileTerms[static_cast<std::size_t>(j)]);
            }
        }
        if (!kept.empty()) {
            Eigen::MatrixXd Xk(X.rows(), static_cast<Eigen::Index>(kept.size()));
            for (std::size_t c = 0; c < kept.size(); ++c) Xk.col(static_cast<Eigen::Index>(c)) = X.col(kept[c]);
            const Eigen::VectorXd b = Xk.colPivHouseholderQr().solve(y);
            for (std::size_t c = 0; c < kept.size(); ++c) {
                fit.profile.c[static_cast<std::size_t>(kept[c])] = b(static_cast<Eigen::Index>(c));
                fit.estimated[static_cast<std::size_t>(kept[c])] = true;
            }
        }
        if (!fit.dropped_terms.empty()) {
            std::string msg = "group " + std::to_string(key) + ": dropped collinear or inestimable terms";
            for (const auto& t : fit.dropped_terms) msg += " " + t;
            model.diagnostics.push_back(msg);
        }

        double effect_sum = 0.0;
        for (std::size_t p : persons) {
            double s = 0.0;
            for (std::size_t i : person_rows[p]) {
                fitted_profile[i] = fit.profile.eval(rows[i].age, rows[i].year);
                s += rows[i].log_earnings - fitted_profile[i];
            }
            raw_effect[p] = s / static_cast<double>(person_rows[p].size());
            effect_sum += raw_effect[p];
        }
        fit.intercept = effect_sum / static_cast<double>(persons.size());
        model.groups.emplace(key, std::move(fit));
    }

    model.person_effects.reserve(person_rows.size());
    std::vector<std::uint64_t> ids(person_rows.size());
    for (const auto& [id, p] : person_index) ids[p] = id;
    for (std::size_t p = 0; p < person_rows.size(); ++p)
        model.person_effects.emplace(ids[p], raw_effect[p] - model.groups.at(person_group[p]).intercept);

    model.residuals.resize(rows.size());
    double ybar = 0.0;
    for (const auto& row : rows) ybar += row.log_earnings;
    ybar /= static_cast<double>(rows.size());
    double rss = 0.0, tss = 0.0;
    for (std::size_t p = 0; p < person_rows.size(); ++p) {
        for (std::size_t i : person_rows[p]) {
            const double e = rows[i].log_earnings - raw_effect[p] - fitted_profile[i];
            model.residuals[i] = e;
            rss += e * e;
            tss += (rows[i].log_earnings - ybar) * (rows[i].log_earnings - ybar);
        }
    }
    model.r2 = tss > 0.0 ? 1.0 - rss / tss : 1.0;
    return model;
}

PredictionReport predict_at_40(const FeModel& model, std::span<const PersonKey> persons,
                               const EvalRule& rule) {
    PredictionReport report;
    const double floor = std::log(rule.bottom_code_level);
    std::size_t fallbacks = 0;
    for (const auto& person : persons) {
        auto effect = model.person_effects.find(person.person_id);
        if (effect == model.person_effects.end()) {
            ++report.without_effect;
            continue;
        }
        auto group = model.groups.find(group_key(person.gender, person.edu_group));
        if (group == model.groups.end()) {
            group = model.groups.find(group_key(person.gender, kMissingEducationGroup));
            if (group == model.groups.end()) {
                report.warnings.push_back("person " + std::to_string(person.person_id) +
                                          ": no profile for its group or the missing-education group");
                continue;
            }
            ++fallbacks;
        }
        int year = rule.common_year.value_or(person.birth_year + rule.age);
        if (rule.clamp_year) year = std::clamp(year, model.year_min, model.year_max);
        const double value =
            group->second.intercept + effect->second + group->second.profile.eval(rule.age, year);
        PredictedEarnings pred;
        pred.person_id = person.person_id;
        pred.log_earnings_at_40 = std::max(value, floor);
        pred.adjusted = pred.log_earnings_at_40;
        pred.relationship = person.relationship;
        pred.child_birth_year = person.child_birth_year;
        report.predictions.push_back(pred);
    }
    if (fallbacks > 0)
        report.warnings.push_back(std::to_string(fallbacks) +
                                  " persons fell back to the missing-education profile");

    if (rule.demean_child_by_gender) {
        std::unordered_map<std::uint64_t, Gender> child_gender;
        for (const auto& person : persons)
            if (person.child_generation) child_gender.emplace(person.person_id, person.gender);
        std::array<double, 2> sum{0.0, 0.0};
        std::array<std::size_t, 2> count{0, 0};
        for (const auto& pred : report.predictions) {
            auto it = child_gender.find(pred.person_id);
            if (it == child_gender.end()) continue;
            const auto g = static_cast<std::size_t>(it->second);
            sum[g] += pred.log_earnings_at_40;
            ++count[g];
        }
        for (auto& pred : report.predictions) {
            auto it = child_gender.find(pred.person_id);
            if (it == child_gender.end()) continue;
            const auto g = static_cast<std::size_t>(it->second);
            pred.adjusted = pred.log_earnings_at_40 - sum[g] / static_cast<double>(count[g]);
            pred.gender_demeaned = true;
        }
    }
    return report;
}

std::vector<double> percentile_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    const double nd = static_cast<double>(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && values[order[j]] == values[order[i]]) ++j;
        // Positions i+1 .. j share the midrank (i + 1 + j) / 2.
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = (midrank - 0.5) / nd;
        i = j;
    }
    return ranks;
}

void rank_within_cells(std::span<PredictedEarnings> predictions) {
    std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (!present(predictions[i].adjusted)) continue;
        cells[{static_cast<int>(predictions[i].relationship), predictions[i].child_birth_year}].push_back(i);
    }
    std::vector<double> values;
    for (const auto& [key, idx] : cells) {
        values.clear();
        for (std::size_t i : idx) values.push_back(predictions[i].adjusted);
        const auto ranks = percentile_ranks(values);
        for (std::size_t k = 0; k < idx.size(); ++k) predictions[idx[k]].rank = ranks[k];
    }
}

void assign_earnings_ranks(std::span<LineageRecord> records) {
    std::map<std::pair<std::size_t, int>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < records.size(); ++i) {
        for (Relative r : kAllRelatives) {
            auto& o = records[i].at(r);
            o.earnings_rank = kMissing;
            if (present(o.log_earnings)) cells[{index_of(r), records[i].child_birth_year}].push_back(i);
        }
    }
    std::vector<double> values;
    for (const auto& [key, idx] : cells) {
        const Relative r = kAllRelatives[key.first];
        values.clear();
        for (std::size_t i : idx) values.push_back(records[i].at(r).log_earnings);
        const auto ranks = percentile_ranks(values);
        for (std::size_t k = 0; k < idx.size(); ++k) records[idx[k]].at(r).earnings_rank = ranks[k];
    }
}

std::vector<PersonKey> person_keys(std::span<const LineageRecord> records) {
    std::vector<PersonKey> keys;
    keys.reserve(records.size() * kRelativeCount);
    for (const auto& rec : records) {
        for (Relative r : kAllRelatives) {
            PersonKey k;
            k.person_id = person_id(rec.child_id, r);
            k.gender = r == Relative::Child ? rec.child_gender : gender_of(r);
            k.edu_group = education_group(rec.at(r).schooling);
            k.birth_year = relative_birth_year(rec, r);
            k.child_generation = r == Relative::Child;
            k.relationship = r;
            k.child_birth_year = rec.child_birth_year;
            keys.push_back(k);
        }
    }
    return keys;
}

void attach_predictions(std::span<LineageRecord> records, const PredictionReport& report) {
    std::unordered_map<std::uint64_t, double> by_person;
    by_person.reserve(report.predictions.size());
    for (const auto& p : report.predictions) by_person.emplace(p.person_id, p.adjusted);
    for (auto& rec : records) {
        for (Relative r : kAllRelatives) {
            auto it = by_person.find(person_id(rec.child_id, r));
            rec.at(r).log_earnings = it == by_person.end() ? kMissing : it->second;
        }
    }
    assign_earnings_ranks(records);
}

std::unordered_map<std::uint64_t, double> k_year_mean(std::span<const EarningsPanelRow> panel, int k) {
    if (k < 1) throw config_error("k-year mean needs k >= 1");
    std::unordered_map<std::uint64_t, std::vector<std::pair<int, double>>> series;
    for (const auto& row : panel)
        if (!row.below_floor) series[row.person_id].emplace_back(row.year, row.log_earnings);
    std::unordered_map<std::uint64_t, double> out;
    for (auto& [id, obs] : series) {
        std::sort(obs.begin(), obs.end());
        const std::size_t take = std::min<std::size_t>(obs.size(), static_cast<std::size_t>(k));
        double s = 0.0;
        for (std::size_t i = obs.size() - take; i < obs.size(); ++i) s += obs[i].second;
        out.emplace(id, s / static_cast<double>(take));
    }
    return out;
}

}  // namespace mobilab
