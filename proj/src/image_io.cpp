#include "geos/image_io.hpp"

#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <cstring>

#include <jpeglib.h>
#include <png.h>

#include <fstream>
#include <memory>

#include "geos/errors.hpp"

namespace geos {

namespace {

std::string lower_ext(const std::filesystem::path& p) {
    std::string e = p.extension().string();
    for (char& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return e;
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f) throw IngestionError("cannot open " + path.string());
    return f;
}

}  // namespace

ImageU8 read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P6" && magic != "P5")
        throw ParseError(path.string() + ": not a binary PPM/PGM file");
    const int channels = magic == "P6" ? 3 : 1;
    auto next_int = [&in, &path]() {
        // skip whitespace and '#' comment lines
        for (;;) {
            int ch = in.peek();
            if (ch == '#') {
                std::string line;
                std::getline(in, line);
            } else if (std::isspace(ch)) {
                in.get();
            } else {
                break;
            }
        }
        int v = -1;
        in >> v;
        if (!in || v < 0) throw ParseError(path.string() + ": malformed header");
        return v;
    };
    const int w = next_int();
    const int h = next_int();
    const int maxval = next_int();
    if (maxval != 255) throw ParseError(path.string() + ": only maxval 255 supported");
    in.get();  // single whitespace after maxval
    ImageU8 im;
    im.h = h;
    im.w = w;
    im.c = channels;
    im.px.resize(static_cast<size_t>(h) * w * channels);
    in.read(reinterpret_cast<char*>(im.px.data()), static_cast<std::streamsize>(im.px.size()));
    if (in.gcount() != static_cast<std::streamsize>(im.px.size()))
        throw ParseError(path.string() + ": truncated pixel data");
    return im;
}

void write_ppm(const std::filesystem::path& path, const ImageU8& im) {
    if (im.c != 3 && im.c != 1) throw ConfigError("ppm supports 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot write " + path.string());
    out << (im.c == 3 ? "P6" : "P5") << "\n" << im.w << " " << im.h << "\n255\n";
    out.write(reinterpret_cast<const char*>(im.px.data()),
              static_cast<std::streamsize>(im.px.size()));
    if (!out) throw IngestionError("write failed: " + path.string());
}

ImageU8 read_png(const std::filesystem::path& path) {
    FilePtr f = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw Error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ParseError(path.string() + ": libpng decode error");
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    png_byte color = png_get_color_type(png, info);
    png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const int channels = png_get_channels(png, info);
    ImageU8 im;
    im.h = static_cast<int>(h);
    im.w = static_cast<int>(w);
    im.c = channels;
    im.px.resize(static_cast<size_t>(h) * w * channels);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = im.px.data() + static_cast<size_t>(y) * w * channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return im;
}

void write_png(const std::filesystem::path& path, const ImageU8& im) {
    if (im.c != 3 && im.c != 1) throw ConfigError("png writer supports 1 or 3 channels");
    FilePtr f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IngestionError(path.string() + ": libpng encode error");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(im.w), static_cast<png_uint_32>(im.h), 8,
                 im.c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(im.h);
    for (int y = 0; y < im.h; ++y)
        rows[y] = const_cast<png_bytep>(im.px.data() + static_cast<size_t>(y) * im.w * im.c);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

namespace {

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    JpegErrorMgr* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    longjmp(err->jump, 1);
}

}  // namespace

ImageU8 read_jpeg(const std::filesystem::path& path) {
    FilePtr f = open_file(path, "rb");
    jpeg_decompress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw ParseError(path.string() + ": libjpeg decode error");
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);
    ImageU8 im;
    im.h = static_cast<int>(cinfo.output_height);
    im.w = static_cast<int>(cinfo.output_width);
    im.c = cinfo.output_components;
    im.px.resize(static_cast<size_t>(im.h) * im.w * im.c);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = im.px.data() + static_cast<size_t>(cinfo.output_scanline) * im.w * im.c;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return im;
}

void write_jpeg(const std::filesystem::path& path, const ImageU8& im, int quality) {
    if (im.c != 3 && im.c != 1) throw ConfigError("jpeg writer supports 1 or 3 channels");
    FilePtr f = open_file(path, "wb");
    jpeg_compress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_compress(&cinfo);
        throw IngestionError(path.string() + ": libjpeg encode error");
    }
    jpeg_create_compress(&cinfo);
    jpeg_stdio_dest(&cinfo, f.get());
    cinfo.image_width = static_cast<JDIMENSION>(im.w);
    cinfo.image_height = static_cast<JDIMENSION>(im.h);
    cinfo.input_components = im.c;
    cinfo.in_color_space = im.c == 3 ? JCS_RGB : JCS_GRAYSCALE;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = const_cast<JSAMPROW>(
            im.px.data() + static_cast<size_t>(cinfo.next_scanline) * im.w * im.c);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
}

ImageU8 load_image(const std::filesystem::path& path) {
    const std::string e = lower_ext(path);
    if (e == ".ppm" || e == ".pgm") return read_ppm(path);
    if (e == ".png") return read_png(path);
    if (e == ".jpg" || e == ".jpeg") return read_jpeg(path);
    throw ConfigError("unsupported image extension: " + path.string());
}

void save_image(const std::filesystem::path& path, const ImageU8& im) {
    const std::string e = lower_ext(path);
    if (e == ".ppm" || e == ".pgm") {
        write_ppm(path, im);
    } else if (e == ".png") {
        write_png(path, im);
    } else if (e == ".jpg" || e == ".jpeg") {
        write_jpeg(path, im);
    } else {
        throw ConfigError("unsupported image extension: " + path.string());
    }
}

}  // namespace geos
