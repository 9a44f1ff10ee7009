#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

namespace pl9 {

// Finite integer set stored as sorted disjoint closed intervals.
class IntervalSet {
public:
    struct Seg {
        int64_t lo, hi;
        bool operator==(const Seg&) const = default;
    };

    IntervalSet() = default;

    static IntervalSet range(int64_t lo, int64_t hi) {
        IntervalSet s;
        if (lo <= hi) s.segs_.push_back({lo, hi});
        return s;
    }

    static IntervalSet of_values(std::vector<int64_t> vals) {
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        IntervalSet s;
        for (int64_t v : vals) {
            if (!s.segs_.empty() && s.segs_.back().hi + 1 == v)
                s.segs_.back().hi = v;
            else
                s.segs_.push_back({v, v});
        }
        return s;
    }

    bool empty() const { return segs_.empty(); }
    bool fixed() const {
        return segs_.size() == 1 && segs_[0].lo == segs_[0].hi;
    }
    int64_t min() const { return segs_.front().lo; }
    int64_t max() const { return segs_.back().hi; }
    int64_t value() const { return segs_.front().lo; }  // when fixed()

    uint64_t size() const {
        uint64_t n = 0;
        for (const Seg& s : segs_)
            n += static_cast<uint64_t>(s.hi - s.lo + 1);
        return n;
    }

    bool contains(int64_t v) const {
        for (const Seg& s : segs_) {
            if (v < s.lo) return false;
            if (v <= s.hi) return true;
        }
        return false;
    }

    IntervalSet intersect(const IntervalSet& o) const {
        IntervalSet out;
        size_t i = 0, j = 0;
        while (i < segs_.size() && j < o.segs_.size()) {
            int64_t lo = std::max(segs_[i].lo, o.segs_[j].lo);
            int64_t hi = std::min(segs_[i].hi, o.segs_[j].hi);
            if (lo <= hi) out.segs_.push_back({lo, hi});
            if (segs_[i].hi < o.segs_[j].hi) ++i; else ++j;
        }
        return out;
    }

    IntervalSet clamp_below(int64_t new_min) const {  // keep v >= new_min
        IntervalSet out;
        for (const Seg& s : segs_) {
            if (s.hi < new_min) continue;
            out.segs_.push_back({std::max(s.lo, new_min), s.hi});
        }
        return out;
    }

    IntervalSet clamp_above(int64_t new_max) const {  // keep v <= new_max
        IntervalSet out;
        for (const Seg& s : segs_) {
            if (s.lo > new_max) break;
            out.segs_.push_back({s.lo, std::min(s.hi, new_max)});
        }
        return out;
    }

    IntervalSet remove(int64_t v) const {
        IntervalSet out;
        for (const Seg& s : segs_) {
            if (v < s.lo || v > s.hi) {
                out.segs_.push_back(s);
            } else {
                if (s.lo < v) out.segs_.push_back({s.lo, v - 1});
                if (v < s.hi) out.segs_.push_back({v + 1, s.hi});
            }
        }
        return out;
    }

    static IntervalSet single(int64_t v) { return range(v, v); }

    template <class Fn>
    void for_each(Fn&& fn) const {
        for (const Seg& s : segs_)
            for (int64_t v = s.lo; v <= s.hi; ++v) fn(v);
    }

    std::vector<int64_t> values() const {
        std::vector<int64_t> out;
        out.reserve(size());
        for_each([&](int64_t v) { out.push_back(v); });
        return out;
    }

    bool operator==(const IntervalSet& o) const { return segs_ == o.segs_; }

    std::string to_string() const {
        std::string out = "{";
        for (size_t i = 0; i < segs_.size(); ++i) {
            if (i) out += ",";
            if (segs_[i].lo == segs_[i].hi)
                out += std::to_string(segs_[i].lo);
            else
                out += std::to_string(segs_[i].lo) + ".." +
                       std::to_string(segs_[i].hi);
        }
        return out + "}";
    }

    const std::vector<Seg>& segments() const { return segs_; }

private:
    std::vector<Seg> segs_;
};

}  // namespace pl9
