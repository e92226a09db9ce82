// Capture file IO: classic pcap (micro/nanosecond, either endianness) and
// pcapng (SHB/IDB/EPB/SPB blocks, per-interface timestamp resolution).
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "censorlab/net.hpp"
#include "censorlab/packet.hpp"
#include "censorlab/util.hpp"

namespace censorlab::pcapio {

struct CaptureError {
    std::string message;
};

struct Record {
    double timestamp = 0;
    std::vector<uint8_t> data;
};

struct Capture {
    uint32_t link_type = 1;
    std::vector<Record> records;
};

namespace detail {

struct ByteReader {
    std::span<const uint8_t> data;
    size_t pos = 0;
    bool swapped = false;  // file endianness differs from little-endian

    bool need(size_t n) const { return pos + n <= data.size(); }

    uint16_t u16() {
        uint16_t v = static_cast<uint16_t>(data[pos] | data[pos + 1] << 8);
        pos += 2;
        return swapped ? static_cast<uint16_t>(v >> 8 | v << 8) : v;
    }
    uint32_t u32() {
        uint32_t v = static_cast<uint32_t>(data[pos]) |
                     static_cast<uint32_t>(data[pos + 1]) << 8 |
                     static_cast<uint32_t>(data[pos + 2]) << 16 |
                     static_cast<uint32_t>(data[pos + 3]) << 24;
        pos += 4;
        return swapped ? __builtin_bswap32(v) : v;
    }
};

inline Result<Capture, CaptureError> read_classic(std::span<const uint8_t> bytes) {
    ByteReader r{bytes};
    if (!r.need(24)) return CaptureError{"truncated pcap header"};
    uint32_t magic = r.u32();
    double frac_unit;
    if (magic == 0xA1B2C3D4) {
        frac_unit = 1e-6;
    } else if (magic == 0xA1B23C4D) {
        frac_unit = 1e-9;
    } else if (magic == 0xD4C3B2A1) {
        r.swapped = true;
        frac_unit = 1e-6;
    } else if (magic == 0x4D3CB2A1) {
        r.swapped = true;
        frac_unit = 1e-9;
    } else {
        return CaptureError{"not a capture file (bad magic)"};
    }
    r.u16();  // version major
    r.u16();  // version minor
    r.u32();  // thiszone
    r.u32();  // sigfigs
    r.u32();  // snaplen
    Capture cap;
    cap.link_type = r.u32();
    while (r.pos < bytes.size()) {
        if (!r.need(16)) return CaptureError{"truncated record header"};
        uint32_t ts_sec = r.u32();
        uint32_t ts_frac = r.u32();
        uint32_t incl_len = r.u32();
        r.u32();  // orig_len
        if (!r.need(incl_len)) return CaptureError{"truncated record data"};
        Record rec;
        rec.timestamp = static_cast<double>(ts_sec) + ts_frac * frac_unit;
        rec.data.assign(bytes.begin() + static_cast<long>(r.pos),
                        bytes.begin() + static_cast<long>(r.pos + incl_len));
        r.pos += incl_len;
        cap.records.push_back(std::move(rec));
    }
    return cap;
}

inline Result<Capture, CaptureError> read_pcapng(std::span<const uint8_t> bytes) {
    Capture cap;
    bool have_link = false;
    struct Iface {
        uint32_t link = 1;
        double ts_unit = 1e-6;
        uint32_t snaplen = 0;
    };
    std::vector<Iface> ifaces;
    ByteReader r{bytes};

    while (r.need(12)) {
        size_t block_start = r.pos;
        uint32_t block_type = r.u32();
        uint32_t total_len = r.u32();
        if (block_type == 0x0A0D0D0A) {
            // Section header: byte-order magic decides endianness from here on.
            if (!r.need(4)) return CaptureError{"truncated section header"};
            uint32_t bom = r.u32();
            if (bom == 0x4D3C2B1A) {
                r.swapped = !r.swapped;
                // reread the length with the corrected endianness
                total_len = __builtin_bswap32(total_len);
            } else if (bom != 0x1A2B3C4D) {
                return CaptureError{"bad byte-order magic"};
            }
            ifaces.clear();  // interfaces are per-section
        }
        if (total_len < 12 || total_len % 4 != 0 ||
            block_start + total_len > bytes.size())
            return CaptureError{"bad block length"};
        size_t body_end = block_start + total_len - 4;

        if (block_type == 1) {  // interface description
            Iface ifc;
            ifc.link = r.u16();
            r.u16();  // reserved
            ifc.snaplen = r.u32();
            // options: code(2) len(2) value(padded)
            while (r.pos + 4 <= body_end) {
                uint16_t code = r.u16();
                uint16_t len = r.u16();
                if (code == 0) break;
                if (r.pos + len > body_end) return CaptureError{"bad option length"};
                if (code == 9 && len >= 1) {  // if_tsresol
                    uint8_t v = bytes[r.pos];
                    ifc.ts_unit = (v & 0x80) ? std::pow(2.0, -(v & 0x7F))
                                             : std::pow(10.0, -static_cast<int>(v));
                }
                r.pos += (len + 3u) & ~3u;
            }
            ifaces.push_back(ifc);
            if (!have_link) {
                cap.link_type = ifc.link;
                have_link = true;
            } else if (cap.link_type != ifc.link) {
                return CaptureError{"mixed link types are not supported"};
            }
        } else if (block_type == 6) {  // enhanced packet block
            if (r.pos + 20 > body_end) return CaptureError{"truncated packet block"};
            uint32_t iface_id = r.u32();
            uint32_t ts_hi = r.u32();
            uint32_t ts_lo = r.u32();
            uint32_t cap_len = r.u32();
            r.u32();  // orig len
            if (iface_id >= ifaces.size())
                return CaptureError{"packet references unknown interface"};
            if (r.pos + cap_len > body_end) return CaptureError{"truncated packet data"};
            Record rec;
            uint64_t ticks = static_cast<uint64_t>(ts_hi) << 32 | ts_lo;
            rec.timestamp = static_cast<double>(ticks) * ifaces[iface_id].ts_unit;
            rec.data.assign(bytes.begin() + static_cast<long>(r.pos),
                            bytes.begin() + static_cast<long>(r.pos + cap_len));
            cap.records.push_back(std::move(rec));
        } else if (block_type == 3) {  // simple packet block
            if (r.pos + 4 > body_end) return CaptureError{"truncated simple packet block"};
            uint32_t orig_len = r.u32();
            if (ifaces.empty()) return CaptureError{"simple packet block before interface"};
            uint32_t cap_len = orig_len;
            if (ifaces[0].snaplen && cap_len > ifaces[0].snaplen) cap_len = ifaces[0].snaplen;
            if (r.pos + cap_len > body_end) return CaptureError{"truncated packet data"};
            Record rec;  // simple blocks carry no timestamp
            rec.data.assign(bytes.begin() + static_cast<long>(r.pos),
                            bytes.begin() + static_cast<long>(r.pos + cap_len));
            cap.records.push_back(std::move(rec));
        }
        r.pos = block_start + total_len;
    }
    if (!have_link && !cap.records.empty())
        return CaptureError{"capture has packets but no interface block"};
    return cap;
}

} // namespace detail

inline Result<Capture, CaptureError> read_bytes(std::span<const uint8_t> bytes) {
    if (bytes.size() < 4) return CaptureError{"file too short"};
    uint32_t first = static_cast<uint32_t>(bytes[0]) | static_cast<uint32_t>(bytes[1]) << 8 |
                     static_cast<uint32_t>(bytes[2]) << 16 |
                     static_cast<uint32_t>(bytes[3]) << 24;
    if (first == 0x0A0D0D0A) return detail::read_pcapng(bytes);
    return detail::read_classic(bytes);
}

inline Result<Capture, CaptureError> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) return CaptureError{"cannot open " + path};
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    return read_bytes(bytes);
}

// --- writers (little-endian) ---

namespace detail {
inline void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
}
inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> 8 * i));
}
} // namespace detail

inline std::vector<uint8_t> encode_pcap(uint32_t link_type,
                                        const std::vector<Record>& records) {
    std::vector<uint8_t> out;
    detail::put_u32(out, 0xA1B2C3D4);
    detail::put_u16(out, 2);
    detail::put_u16(out, 4);
    detail::put_u32(out, 0);
    detail::put_u32(out, 0);
    detail::put_u32(out, 65535);
    detail::put_u32(out, link_type);
    for (const auto& rec : records) {
        auto sec = static_cast<uint32_t>(rec.timestamp);
        auto usec = static_cast<uint32_t>(std::llround((rec.timestamp - sec) * 1e6));
        if (usec >= 1000000) {
            ++sec;
            usec -= 1000000;
        }
        detail::put_u32(out, sec);
        detail::put_u32(out, usec);
        detail::put_u32(out, static_cast<uint32_t>(rec.data.size()));
        detail::put_u32(out, static_cast<uint32_t>(rec.data.size()));
        out.insert(out.end(), rec.data.begin(), rec.data.end());
    }
    return out;
}

inline std::vector<uint8_t> encode_pcapng(uint32_t link_type,
                                          const std::vector<Record>& records) {
    std::vector<uint8_t> out;
    auto block = [&](uint32_t type, const std::vector<uint8_t>& body) {
        uint32_t pad = (4 - body.size() % 4) % 4;
        uint32_t total = static_cast<uint32_t>(12 + body.size() + pad);
        detail::put_u32(out, type);
        detail::put_u32(out, total);
        out.insert(out.end(), body.begin(), body.end());
        for (uint32_t i = 0; i < pad; ++i) out.push_back(0);
        detail::put_u32(out, total);
    };
    {
        std::vector<uint8_t> shb;
        detail::put_u32(shb, 0x1A2B3C4D);
        detail::put_u16(shb, 1);
        detail::put_u16(shb, 0);
        for (int i = 0; i < 8; ++i) shb.push_back(0xFF);  // section length unknown
        block(0x0A0D0D0A, shb);
    }
    {
        std::vector<uint8_t> idb;
        detail::put_u16(idb, static_cast<uint16_t>(link_type));
        detail::put_u16(idb, 0);
        detail::put_u32(idb, 65535);
        block(1, idb);
    }
    for (const auto& rec : records) {
        std::vector<uint8_t> epb;
        auto ticks = static_cast<uint64_t>(std::llround(rec.timestamp * 1e6));
        detail::put_u32(epb, 0);
        detail::put_u32(epb, static_cast<uint32_t>(ticks >> 32));
        detail::put_u32(epb, static_cast<uint32_t>(ticks));
        detail::put_u32(epb, static_cast<uint32_t>(rec.data.size()));
        detail::put_u32(epb, static_cast<uint32_t>(rec.data.size()));
        epb.insert(epb.end(), rec.data.begin(), rec.data.end());
        while (epb.size() % 4) epb.push_back(0);
        block(6, epb);
    }
    return out;
}

inline bool write_file(const std::string& path, std::span<const uint8_t> bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) return false;
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    return static_cast<bool>(f);
}

} // namespace censorlab::pcapio
