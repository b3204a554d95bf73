#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

#include "steer/types.hpp"

namespace steer::fabric {

// Lossless contact-map compressor. The strict upper triangle is bit-packed
// (diagonal and symmetry are implied), then the smallest of three encodings
// wins: raw packing, byte-level RLE over 0x00/0xFF runs, or set-bit gaps.
std::vector<uint8_t> compress_map(const ContactMap& map);
ContactMap decompress_map(const std::vector<uint8_t>& bytes, int size);

// Full-matrix bit-pack used on the compression-off path.
std::vector<uint8_t> pack_map_raw(const ContactMap& map);
ContactMap unpack_map_raw(const std::vector<uint8_t>& bytes, int size);

// Wire/file record. Fixed 40-byte header, little-endian float64 payload.
struct FrameRecord {
    int64_t sim_id = 0;
    int64_t segment_index = 0;
    int64_t step = 0;
    int64_t weights_version_hint = 0;
    int64_t lineage_id = 0;
    bool compressed = false;
    Eigen::MatrixX2d positions;
    double rmsd = 0.0;
    ContactMap map;

    bool operator==(const FrameRecord& o) const;
};

std::vector<uint8_t> encode_record(const FrameRecord& rec);
std::vector<uint8_t> encode_end_sentinel();

struct DecodeOutcome {
    std::optional<FrameRecord> record;  // nullopt for the END sentinel
    size_t consumed = 0;
    bool end_sentinel = false;
};

// Decodes one record from `data + at`. Returns nullopt when the remaining
// bytes are only a partial record (crash-truncation tolerance); throws
// CORRUPT_STREAM on structurally invalid bytes.
std::optional<DecodeOutcome> decode_record(const std::vector<uint8_t>& data, size_t at);

// Append-only per-aggregator segment file (`agg_<i>.seg`).
class SegmentWriter {
public:
    explicit SegmentWriter(const std::filesystem::path& path);
    void write_record(const FrameRecord& rec);
    void write_end();
    void flush();
    const std::vector<uint64_t>& offsets() const { return offsets_; }

private:
    std::ofstream out_;
    uint64_t at_ = 0;
    std::vector<uint64_t> offsets_;
};

struct SegmentReadResult {
    std::vector<FrameRecord> records;
    bool saw_end = false;
};

// Reads every complete record; a partial trailing record is ignored.
SegmentReadResult read_segment_file(const std::filesystem::path& path);

// Incremental tail reader for the file-coupled path.
class SegmentTailReader {
public:
    explicit SegmentTailReader(std::filesystem::path path) : path_(std::move(path)) {}
    // Returns newly appended complete records since the last poll.
    SegmentReadResult poll();

private:
    std::filesystem::path path_;
    uint64_t offset_ = 0;
};

}  // namespace steer::fabric
