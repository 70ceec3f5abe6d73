#pragma once

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "dacesr/image.hpp"
#include "dacesr/imgproc.hpp"

namespace dacesr::tagging {

/// Deduplicated, lower-cased tag tokens.
struct TagSet {
    std::set<std::string> tags;

    void insert(std::string token);
    bool contains(const std::string& t) const { return tags.count(t) > 0; }
    size_t size() const { return tags.size(); }
};

/// |a ∩ b| / |a ∪ b|; two empty sets compare as identical (1.0).
double jaccard(const TagSet& a, const TagSet& b);

class Tagger {
public:
    virtual ~Tagger() = default;
    virtual std::string name() const = 0;
    virtual TagSet tag(const ImageTensor& img) const = 0;
};

/// Deterministic statistics-based tagger standing in for RAM. Tokens come
/// from quantized hue/edge/orientation/luminance statistics so that heavier
/// degradation moves tokens further from the clean image's set.
class SurrogateTagger : public Tagger {
public:
    std::string name() const override { return "surrogate"; }
    TagSet tag(const ImageTensor& img) const override;
};

std::unique_ptr<Tagger> make_tagger(const std::string& name);

struct SimilarityRecord {
    int spec_id = 0;
    double mean_similarity = 0.0;
    int n_images = 0;
};

struct SimilarityReport {
    std::vector<SimilarityRecord> records;

    std::string to_jsonl() const;
    static SimilarityReport from_jsonl(const std::string& text);
    std::string to_csv() const;
};

/// Mean Jaccard between clean tags and degraded tags per spec. HR tags are
/// computed once and reused; summation order is fixed by image index.
SimilarityReport severity_profile(const std::vector<ImageTensor>& hr_images,
                                  const std::vector<imgproc::DegradationSpec>& degradations,
                                  const Tagger& tagger, int jobs = 1);

struct SeverityClasses {
    // class_ids[0] holds the highest similarities (mildest degradations).
    std::vector<int> class_ids[4];
};

/// Sorts by similarity descending (ties by spec_id ascending) and splits
/// into four contiguous groups, remainders to earlier classes.
SeverityClasses classify_four(const SimilarityReport& report);

struct ThresholdSelection {
    std::set<int> mild;    // S > tau1
    std::set<int> severe;  // S < tau2
};

ThresholdSelection select_by_threshold(const SimilarityReport& report, double tau1,
                                       double tau2);

}  // namespace dacesr::tagging
