#include "etlab/png_io.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "etlab/errors.hpp"

namespace etlab {

namespace {

constexpr std::array<uint8_t, 8> kPngSignature = {137, 80, 78, 71, 13, 10, 26, 10};

uint32_t crc32_table_entry(uint32_t n) {
    uint32_t c = n;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    return c;
}

const std::array<uint32_t, 256>& crc32_table() {
    static const std::array<uint32_t, 256> table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t n = 0; n < 256; ++n) t[n] = crc32_table_entry(n);
        return t;
    }();
    return table;
}

uint32_t crc32(const uint8_t* data, size_t len) {
    uint32_t c = 0xFFFFFFFFu;
    const auto& t = crc32_table();
    for (size_t i = 0; i < len; ++i) c = t[(c ^ data[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

uint32_t adler32(const uint8_t* data, size_t len) {
    uint32_t a = 1, b = 0;
    for (size_t i = 0; i < len; ++i) {
        a = (a + data[i]) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_u32_be(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void append_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& payload) {
    put_u32_be(out, static_cast<uint32_t>(payload.size()));
    std::vector<uint8_t> body;
    body.reserve(4 + payload.size());
    body.insert(body.end(), type, type + 4);
    body.insert(body.end(), payload.begin(), payload.end());
    out.insert(out.end(), body.begin(), body.end());
    put_u32_be(out, crc32(body.data(), body.size()));
}

// zlib stream with stored (uncompressed) deflate blocks.
std::vector<uint8_t> zlib_store(const std::vector<uint8_t>& raw) {
    std::vector<uint8_t> z;
    z.push_back(0x78);  // CM=8, CINFO=7
    z.push_back(0x01);  // FCHECK for no preset dict, fastest level
    size_t pos = 0;
    const size_t kMax = 65535;
    while (true) {
        const size_t n = std::min(kMax, raw.size() - pos);
        const bool final = (pos + n == raw.size());
        z.push_back(final ? 1 : 0);
        z.push_back(static_cast<uint8_t>(n & 0xFF));
        z.push_back(static_cast<uint8_t>(n >> 8));
        z.push_back(static_cast<uint8_t>(~n & 0xFF));
        z.push_back(static_cast<uint8_t>((~n >> 8) & 0xFF));
        z.insert(z.end(), raw.begin() + pos, raw.begin() + pos + n);
        pos += n;
        if (final) break;
    }
    put_u32_be(z, adler32(raw.data(), raw.size()));
    return z;
}

std::vector<uint8_t> zlib_unstore(const std::vector<uint8_t>& z) {
    if (z.size() < 6) throw CorruptData("png: zlib stream truncated");
    if ((z[0] & 0x0F) != 8) throw CorruptData("png: unsupported zlib compression method");
    std::vector<uint8_t> raw;
    size_t pos = 2;
    while (true) {
        if (pos + 5 > z.size()) throw CorruptData("png: deflate block header truncated");
        const uint8_t header = z[pos];
        if ((header & 0x06) != 0)
            throw CorruptData("png: only stored deflate blocks are supported");
        const size_t len = size_t(z[pos + 1]) | (size_t(z[pos + 2]) << 8);
        const size_t nlen = size_t(z[pos + 3]) | (size_t(z[pos + 4]) << 8);
        if ((len ^ nlen) != 0xFFFF) throw CorruptData("png: stored block length check failed");
        pos += 5;
        if (pos + len > z.size()) throw CorruptData("png: stored block truncated");
        raw.insert(raw.end(), z.begin() + pos, z.begin() + pos + len);
        pos += len;
        if (header & 1) break;
    }
    if (pos + 4 > z.size()) throw CorruptData("png: adler32 missing");
    if (get_u32_be(z.data() + pos) != adler32(raw.data(), raw.size()))
        throw CorruptData("png: adler32 mismatch");
    return raw;
}

}  // namespace

std::vector<uint8_t> encode_png_rgb8(const std::vector<uint8_t>& rgb, int width, int height) {
    if (width <= 0 || height <= 0 || rgb.size() != static_cast<size_t>(width) * height * 3)
        throw ShapeError("encode_png_rgb8: bad dimensions");

    std::vector<uint8_t> out(kPngSignature.begin(), kPngSignature.end());

    std::vector<uint8_t> ihdr;
    put_u32_be(ihdr, static_cast<uint32_t>(width));
    put_u32_be(ihdr, static_cast<uint32_t>(height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // color type: truecolor
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // no interlace
    append_chunk(out, "IHDR", ihdr);

    // Filter byte 0 per scanline.
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(height) * (1 + static_cast<size_t>(width) * 3));
    const size_t stride = static_cast<size_t>(width) * 3;
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), rgb.begin() + y * stride, rgb.begin() + (y + 1) * stride);
    }
    append_chunk(out, "IDAT", zlib_store(raw));
    append_chunk(out, "IEND", {});
    return out;
}

std::vector<uint8_t> decode_png_rgb8(const std::vector<uint8_t>& bytes, int& width, int& height) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSignature.data(), 8) != 0)
        throw CorruptData("png: bad signature");

    width = height = 0;
    std::vector<uint8_t> idat;
    bool saw_ihdr = false, saw_iend = false;
    size_t pos = 8;
    while (pos + 12 <= bytes.size()) {
        const uint32_t len = get_u32_be(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw CorruptData("png: chunk truncated");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const uint8_t* payload = bytes.data() + pos + 8;
        const uint32_t crc_stored = get_u32_be(bytes.data() + pos + 8 + len);
        if (crc32(bytes.data() + pos + 4, 4 + len) != crc_stored)
            throw CorruptData("png: chunk crc mismatch");

        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw CorruptData("png: bad IHDR");
            width = static_cast<int>(get_u32_be(payload));
            height = static_cast<int>(get_u32_be(payload + 4));
            if (payload[8] != 8 || payload[9] != 2 || payload[10] != 0 || payload[11] != 0 ||
                payload[12] != 0)
                throw CorruptData("png: unsupported format (need 8-bit RGB, no interlace)");
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
            break;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || !saw_iend || width <= 0 || height <= 0)
        throw CorruptData("png: missing chunks");

    const std::vector<uint8_t> raw = zlib_unstore(idat);
    const size_t stride = static_cast<size_t>(width) * 3;
    if (raw.size() != static_cast<size_t>(height) * (stride + 1))
        throw CorruptData("png: scanline data size mismatch");

    std::vector<uint8_t> rgb(static_cast<size_t>(width) * height * 3);
    for (int y = 0; y < height; ++y) {
        const uint8_t* row = raw.data() + static_cast<size_t>(y) * (stride + 1);
        if (row[0] != 0) throw CorruptData("png: only filter 0 rows are supported");
        std::memcpy(rgb.data() + static_cast<size_t>(y) * stride, row + 1, stride);
    }
    return rgb;
}

std::vector<uint8_t> image_to_png(const Image& img) {
    std::vector<uint8_t> rgb(img.data.size());
    for (size_t i = 0; i < img.data.size(); ++i) rgb[i] = quantize_channel(img.data[i]);
    return encode_png_rgb8(rgb, img.width, img.height);
}

Image image_from_png(const std::vector<uint8_t>& bytes) {
    int w = 0, h = 0;
    const std::vector<uint8_t> rgb = decode_png_rgb8(bytes, w, h);
    Image img(w, h);
    for (size_t i = 0; i < rgb.size(); ++i) img.data[i] = dequantize_channel(rgb[i]);
    return img;
}

void write_png_file(const std::string& path, const Image& img) {
    write_file_bytes(path, image_to_png(img));
}

Image read_png_file(const std::string& path) { return image_from_png(read_file_bytes(path)); }

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path);
    return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create file: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace etlab
