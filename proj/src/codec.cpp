#include "steer/codec.hpp"

#include <cstring>

namespace steer::fabric {

namespace {

constexpr uint8_t kModeRaw = 0;
constexpr uint8_t kModeRle = 1;
constexpr uint8_t kModeGaps = 2;

constexpr uint32_t kFlagCompressed = 1u;
constexpr uint32_t kFlagEnd = 2u;

size_t upper_bits(int b) { return static_cast<size_t>(b) * (b - 1) / 2; }

std::vector<uint8_t> pack_upper(const ContactMap& m) {
    const int b = m.size();
    std::vector<uint8_t> bytes((upper_bits(b) + 7) / 8, 0);
    size_t bit = 0;
    for (int i = 0; i < b; ++i)
        for (int j = i + 1; j < b; ++j, ++bit)
            if (m.at(i, j)) bytes[bit / 8] |= static_cast<uint8_t>(1u << (bit % 8));
    return bytes;
}

ContactMap unpack_upper(const std::vector<uint8_t>& bytes, int b) {
    if (bytes.size() != (upper_bits(b) + 7) / 8)
        throw SteerError(ErrorCode::CORRUPT_STREAM, "packed triangle length mismatch");
    ContactMap m(b);
    size_t bit = 0;
    for (int i = 0; i < b; ++i)
        for (int j = i + 1; j < b; ++j, ++bit)
            m.set(i, j, (bytes[bit / 8] >> (bit % 8)) & 1u);
    // trailing pad bits must be zero
    for (size_t t = upper_bits(b); t < bytes.size() * 8; ++t)
        if ((bytes[t / 8] >> (t % 8)) & 1u)
            throw SteerError(ErrorCode::CORRUPT_STREAM, "nonzero padding bits");
    return m;
}

std::vector<uint8_t> rle_encode(const std::vector<uint8_t>& in) {
    std::vector<uint8_t> out;
    size_t i = 0;
    while (i < in.size()) {
        uint8_t b = in[i];
        if (b == 0x00 || b == 0xFF) {
            size_t run = 1;
            while (i + run < in.size() && in[i + run] == b && run < 255) ++run;
            out.push_back(b);
            out.push_back(static_cast<uint8_t>(run));
            i += run;
        } else {
            out.push_back(b);
            ++i;
        }
    }
    return out;
}

std::vector<uint8_t> rle_decode(const std::vector<uint8_t>& in, size_t expect) {
    std::vector<uint8_t> out;
    out.reserve(expect);
    size_t i = 0;
    while (i < in.size()) {
        uint8_t b = in[i++];
        if (b == 0x00 || b == 0xFF) {
            if (i >= in.size()) throw SteerError(ErrorCode::CORRUPT_STREAM, "dangling run marker");
            uint8_t run = in[i++];
            if (run == 0) throw SteerError(ErrorCode::CORRUPT_STREAM, "zero-length run");
            out.insert(out.end(), run, b);
        } else {
            out.push_back(b);
        }
        if (out.size() > expect) throw SteerError(ErrorCode::CORRUPT_STREAM, "run overflow");
    }
    if (out.size() != expect) throw SteerError(ErrorCode::CORRUPT_STREAM, "short RLE stream");
    return out;
}

std::vector<uint8_t> gaps_encode(const std::vector<uint8_t>& packed, size_t nbits) {
    std::vector<uint8_t> out;
    size_t prev = SIZE_MAX;  // so the first gap is pos + 1
    for (size_t t = 0; t < nbits; ++t) {
        if (!((packed[t / 8] >> (t % 8)) & 1u)) continue;
        size_t gap = t - prev;
        prev = t;
        while (gap > 254) {
            out.push_back(0xFF);
            gap -= 254;
        }
        out.push_back(static_cast<uint8_t>(gap));
    }
    return out;
}

std::vector<uint8_t> gaps_decode(const std::vector<uint8_t>& in, size_t nbits) {
    std::vector<uint8_t> packed((nbits + 7) / 8, 0);
    size_t pos = SIZE_MAX;
    size_t acc = 0;
    for (uint8_t b : in) {
        if (b == 0xFF) {
            acc += 254;
            continue;
        }
        if (b == 0) throw SteerError(ErrorCode::CORRUPT_STREAM, "zero gap");
        acc += b;
        pos = (pos == SIZE_MAX ? acc - 1 : pos + acc);
        if (pos >= nbits) throw SteerError(ErrorCode::CORRUPT_STREAM, "gap past end");
        packed[pos / 8] |= static_cast<uint8_t>(1u << (pos % 8));
        acc = 0;
    }
    if (acc != 0) throw SteerError(ErrorCode::CORRUPT_STREAM, "dangling gap continuation");
    return packed;
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint64_t get_u64(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint32_t get_u32(const uint8_t* p) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    return v;
}

void put_f64(std::vector<uint8_t>& out, double d) {
    uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(out, v);
}

double get_f64(const uint8_t* p) {
    uint64_t v = get_u64(p);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

}  // namespace

std::vector<uint8_t> compress_map(const ContactMap& map) {
    const size_t nbits = upper_bits(map.size());
    std::vector<uint8_t> packed = pack_upper(map);
    std::vector<uint8_t> rle = rle_encode(packed);
    std::vector<uint8_t> gaps = gaps_encode(packed, nbits);
    std::vector<uint8_t> out;
    if (packed.size() <= rle.size() && packed.size() <= gaps.size()) {
        out.push_back(kModeRaw);
        out.insert(out.end(), packed.begin(), packed.end());
    } else if (rle.size() <= gaps.size()) {
        out.push_back(kModeRle);
        out.insert(out.end(), rle.begin(), rle.end());
    } else {
        out.push_back(kModeGaps);
        out.insert(out.end(), gaps.begin(), gaps.end());
    }
    return out;
}

ContactMap decompress_map(const std::vector<uint8_t>& bytes, int size) {
    if (bytes.empty()) throw SteerError(ErrorCode::CORRUPT_STREAM, "empty compressed map");
    const size_t nbits = upper_bits(size);
    std::vector<uint8_t> body(bytes.begin() + 1, bytes.end());
    switch (bytes[0]) {
        case kModeRaw: return unpack_upper(body, size);
        case kModeRle: return unpack_upper(rle_decode(body, (nbits + 7) / 8), size);
        case kModeGaps: return unpack_upper(gaps_decode(body, nbits), size);
        default: throw SteerError(ErrorCode::CORRUPT_STREAM, "unknown compression mode");
    }
}

std::vector<uint8_t> pack_map_raw(const ContactMap& map) {
    const int b = map.size();
    const size_t nbits = static_cast<size_t>(b) * b;
    std::vector<uint8_t> bytes((nbits + 7) / 8, 0);
    size_t bit = 0;
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j, ++bit)
            if (map.at(i, j)) bytes[bit / 8] |= static_cast<uint8_t>(1u << (bit % 8));
    return bytes;
}

ContactMap unpack_map_raw(const std::vector<uint8_t>& bytes, int size) {
    const size_t nbits = static_cast<size_t>(size) * size;
    if (bytes.size() != (nbits + 7) / 8)
        throw SteerError(ErrorCode::CORRUPT_STREAM, "raw map length mismatch");
    ContactMap m(size);
    size_t bit = 0;
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j, ++bit)
            m.set(i, j, (bytes[bit / 8] >> (bit % 8)) & 1u);
    return m;
}

bool FrameRecord::operator==(const FrameRecord& o) const {
    return sim_id == o.sim_id && segment_index == o.segment_index && step == o.step &&
           weights_version_hint == o.weights_version_hint && lineage_id == o.lineage_id &&
           compressed == o.compressed && positions == o.positions &&
           std::memcmp(&rmsd, &o.rmsd, sizeof(double)) == 0 && map == o.map;
}

std::vector<uint8_t> encode_record(const FrameRecord& rec) {
    std::vector<uint8_t> out;
    put_u64(out, static_cast<uint64_t>(rec.sim_id));
    put_u64(out, static_cast<uint64_t>(rec.segment_index));
    put_u64(out, static_cast<uint64_t>(rec.step));
    put_u64(out, static_cast<uint64_t>(rec.weights_version_hint));
    put_u32(out, rec.compressed ? kFlagCompressed : 0u);
    put_u32(out, static_cast<uint32_t>(rec.map.size()));
    put_u64(out, static_cast<uint64_t>(rec.lineage_id));
    for (Eigen::Index i = 0; i < rec.positions.rows(); ++i) {
        put_f64(out, rec.positions(i, 0));
        put_f64(out, rec.positions(i, 1));
    }
    put_f64(out, rec.rmsd);
    std::vector<uint8_t> mapbytes = rec.compressed ? compress_map(rec.map) : pack_map_raw(rec.map);
    put_u32(out, static_cast<uint32_t>(mapbytes.size()));
    out.insert(out.end(), mapbytes.begin(), mapbytes.end());
    return out;
}

std::vector<uint8_t> encode_end_sentinel() {
    std::vector<uint8_t> out;
    put_u64(out, 0);
    put_u64(out, 0);
    put_u64(out, 0);
    put_u64(out, 0);
    put_u32(out, kFlagEnd);
    put_u32(out, 0);
    return out;
}

std::optional<DecodeOutcome> decode_record(const std::vector<uint8_t>& data, size_t at) {
    constexpr size_t kHeader = 40;
    if (data.size() - at < kHeader) return std::nullopt;
    const uint8_t* p = data.data() + at;
    uint32_t flags = get_u32(p + 32);
    uint32_t beads = get_u32(p + 36);
    if (flags & kFlagEnd) return DecodeOutcome{std::nullopt, kHeader, true};
    if (flags & ~(kFlagCompressed | kFlagEnd))
        throw SteerError(ErrorCode::CORRUPT_STREAM, "unknown record flags");
    if (beads < 2 || beads > (1u << 16))
        throw SteerError(ErrorCode::CORRUPT_STREAM, "implausible bead count");
    FrameRecord rec;
    rec.sim_id = static_cast<int64_t>(get_u64(p));
    rec.segment_index = static_cast<int64_t>(get_u64(p + 8));
    rec.step = static_cast<int64_t>(get_u64(p + 16));
    rec.weights_version_hint = static_cast<int64_t>(get_u64(p + 24));
    rec.compressed = (flags & kFlagCompressed) != 0;
    const size_t fixed = 8 /*lineage*/ + static_cast<size_t>(beads) * 16 + 8 /*rmsd*/ + 4;
    if (data.size() - at < kHeader + fixed) return std::nullopt;
    const uint8_t* q = p + kHeader;
    rec.lineage_id = static_cast<int64_t>(get_u64(q));
    q += 8;
    rec.positions.resize(beads, 2);
    for (uint32_t i = 0; i < beads; ++i) {
        rec.positions(i, 0) = get_f64(q);
        rec.positions(i, 1) = get_f64(q + 8);
        q += 16;
    }
    rec.rmsd = get_f64(q);
    q += 8;
    uint32_t maplen = get_u32(q);
    q += 4;
    if (maplen > (1u << 28)) throw SteerError(ErrorCode::CORRUPT_STREAM, "implausible map length");
    if (data.size() - at < kHeader + fixed + maplen) return std::nullopt;
    std::vector<uint8_t> mapbytes(q, q + maplen);
    rec.map = rec.compressed ? decompress_map(mapbytes, static_cast<int>(beads))
                             : unpack_map_raw(mapbytes, static_cast<int>(beads));
    return DecodeOutcome{std::move(rec), kHeader + fixed + maplen, false};
}

SegmentWriter::SegmentWriter(const std::filesystem::path& path)
    : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw SteerError(ErrorCode::IO_FAILURE, "cannot open " + path.string());
}

void SegmentWriter::write_record(const FrameRecord& rec) {
    auto bytes = encode_record(rec);
    offsets_.push_back(at_);
    out_.write(reinterpret_cast<const char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size()));
    at_ += bytes.size();
    if (!out_) throw SteerError(ErrorCode::IO_FAILURE, "segment write failed");
}

void SegmentWriter::write_end() {
    auto bytes = encode_end_sentinel();
    out_.write(reinterpret_cast<const char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size()));
    at_ += bytes.size();
    out_.flush();
}

void SegmentWriter::flush() { out_.flush(); }

namespace {

SegmentReadResult read_from(const std::filesystem::path& path, uint64_t& offset) {
    SegmentReadResult res;
    std::ifstream in(path, std::ios::binary);
    if (!in) return res;
    in.seekg(0, std::ios::end);
    uint64_t size = static_cast<uint64_t>(in.tellg());
    if (size <= offset) return res;
    std::vector<uint8_t> data(size - offset);
    in.seekg(static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    size_t at = 0;
    while (at < data.size()) {
        auto out = decode_record(data, at);
        if (!out) break;  // partial trailing record: wait / ignore
        at += out->consumed;
        if (out->end_sentinel) {
            res.saw_end = true;
            break;
        }
        res.records.push_back(std::move(*out->record));
    }
    offset += at;
    return res;
}

}  // namespace

SegmentReadResult read_segment_file(const std::filesystem::path& path) {
    uint64_t offset = 0;
    return read_from(path, offset);
}

SegmentReadResult SegmentTailReader::poll() { return read_from(path_, offset_); }

}  // namespace steer::fabric
