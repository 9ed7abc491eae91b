#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "freqseg/nten.hpp"
#include "freqseg/pgm.hpp"
#include "test_util.hpp"

using namespace freqseg;

TEST(Nten, HeaderBytes) {
  NtenArray a;
  a.dtype = DType::U8;
  a.shape = {2, 3};
  a.u8 = {1, 2, 3, 4, 5, 6};
  std::ostringstream out;
  write_nten(out, a);
  const std::string s = out.str();
  const std::string expected_header{'N', 'T', 'E', 'N', 1, 1, 2, 2, 0, 0, 0, 3, 0, 0, 0};
  ASSERT_EQ(s.size(), expected_header.size() + 6);
  EXPECT_EQ(s.substr(0, expected_header.size()), expected_header);
  EXPECT_EQ(s.back(), 6);
}

TEST(Nten, F32LittleEndianPayload) {
  NtenArray a;
  a.shape = {1};
  a.f32 = {1.0f};
  std::ostringstream out;
  write_nten(out, a);
  const std::string s = out.str();
  // 1.0f = 0x3f800000
  EXPECT_EQ(s.substr(s.size() - 4), (std::string{0, 0, '\x80', '\x3f'}));
}

TEST(Nten, RoundTripAllDtypes) {
  NtenArray f;
  f.shape = {2, 2, 1};
  f.f32 = {1.5f, -2.25f, 3e-8f, 1e30f};
  NtenArray u;
  u.dtype = DType::U8;
  u.shape = {3};
  u.u8 = {0, 128, 255};
  NtenArray i;
  i.dtype = DType::I64;
  i.shape = {2};
  i.i64 = {-5, 1LL << 40};
  for (const NtenArray& a : {f, u, i}) {
    std::stringstream io;
    write_nten(io, a);
    const NtenArray b = read_nten(io);
    EXPECT_EQ(b.dtype, a.dtype);
    EXPECT_EQ(b.shape, a.shape);
    EXPECT_EQ(b.f32, a.f32);
    EXPECT_EQ(b.u8, a.u8);
    EXPECT_EQ(b.i64, a.i64);
  }
}

TEST(Nten, RejectsCorruptInput) {
  std::istringstream bad_magic(std::string("NTEX\x01\x00\x00", 7));
  EXPECT_THROW(read_nten(bad_magic), std::runtime_error);
  std::istringstream bad_version(std::string("NTEN\x02\x00\x00", 7));
  EXPECT_THROW(read_nten(bad_version), std::runtime_error);
  std::istringstream truncated(std::string("NTEN\x01\x00\x01\x04\x00\x00\x00\x00\x00", 13));
  EXPECT_THROW(read_nten(truncated), std::runtime_error);
}

TEST(Nten, TensorFiles) {
  testutil::TempDir dir("nten");
  Rng rng(3);
  const Tensor t = testutil::random_tensor({2, 3, 4}, rng);
  save_tensor(dir.path / "t.nten", t);
  const Tensor back = load_tensor(dir.path / "t.nten");
  EXPECT_EQ(back.shape(), t.shape());
  EXPECT_EQ(testutil::max_abs_diff(back.data(), t.data()), 0.0);
  EXPECT_THROW(load_tensor(dir.path / "missing.nten"), std::runtime_error);
}

TEST(Pgm, WriteReadP5) {
  testutil::TempDir dir("pgm");
  const std::vector<std::uint8_t> px{0, 10, 20, 255, 128, 7};
  write_pgm(dir.path / "a.pgm", 3, 2, px);
  const PnmImage img = read_pnm(dir.path / "a.pgm");
  EXPECT_EQ(img.width, 3);
  EXPECT_EQ(img.height, 2);
  EXPECT_EQ(img.channels, 1);
  EXPECT_EQ(img.maxval, 255);
  EXPECT_EQ(std::vector<std::uint16_t>(img.samples.begin(), img.samples.end()),
            (std::vector<std::uint16_t>{0, 10, 20, 255, 128, 7}));
  const Tensor t = pnm_to_tensor(img);
  EXPECT_EQ(t.shape(), (Shape{1, 2, 3}));
  EXPECT_FLOAT_EQ(t.data()[3], 1.0f);
}

TEST(Pgm, AsciiWithComments) {
  std::istringstream in("P2\n# a comment\n2 2\n# another\n15\n0 5\n10 15\n");
  const PnmImage img = read_pnm(in);
  EXPECT_EQ(img.maxval, 15);
  EXPECT_EQ(std::vector<std::uint16_t>(img.samples.begin(), img.samples.end()),
            (std::vector<std::uint16_t>{0, 5, 10, 15}));
  const Tensor t = pnm_to_tensor(img);
  EXPECT_FLOAT_EQ(t.data()[1], 5.0f / 15.0f);
}

TEST(Pgm, SixteenBitBigEndian) {
  std::string s = "P5 1 1 65535\n";
  s += '\x12';
  s += '\x34';
  std::istringstream in(s);
  EXPECT_EQ(read_pnm(in).samples.at(0), 0x1234);
}

TEST(Pgm, ColourP6) {
  std::string s = "P6 1 1 255\n";
  s += std::string{'\x01', '\x02', '\x03'};
  std::istringstream in(s);
  const Tensor t = pnm_to_tensor(read_pnm(in));
  EXPECT_EQ(t.shape(), (Shape{3, 1, 1}));
  EXPECT_FLOAT_EQ(t.data()[2], 3.0f / 255.0f);
}

TEST(Pgm, RejectsMalformed) {
  std::istringstream bad("P7 1 1 255\n\x00");
  EXPECT_THROW(read_pnm(bad), std::runtime_error);
  std::istringstream short_payload("P5 2 2 255\n\x01");
  EXPECT_THROW(read_pnm(short_payload), std::runtime_error);
}

TEST(Pgm, UnitAndPreviewWriters) {
  testutil::TempDir dir("pgmw");
  const Tensor t = Tensor::from_vector({1, 1, 3}, {-0.5f, 0.5f, 2.0f});
  write_unit_pgm(dir.path / "u.pgm", t);
  EXPECT_EQ(std::vector<std::uint16_t>(read_pnm(dir.path / "u.pgm").samples),
            (std::vector<std::uint16_t>{0, 128, 255}));
  write_preview_pgm(dir.path / "p.pgm", t);
  EXPECT_EQ(std::vector<std::uint16_t>(read_pnm(dir.path / "p.pgm").samples),
            (std::vector<std::uint16_t>{0, 102, 255}));
  write_preview_pgm(dir.path / "c.pgm", Tensor::full({1, 2, 2}, 3.0f));
  EXPECT_EQ(std::vector<std::uint16_t>(read_pnm(dir.path / "c.pgm").samples), (std::vector<std::uint16_t>(4, 0)));
}

TEST(Pgm, LoadImageDispatch) {
  testutil::TempDir dir("load");
  save_tensor(dir.path / "hw.nten", Tensor::from_vector({2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(load_image(dir.path / "hw.nten").shape(), (Shape{1, 2, 2}));
  const std::vector<std::uint8_t> px{255, 0};
  write_pgm(dir.path / "x.pgm", 2, 1, px);
  EXPECT_EQ(load_image(dir.path / "x.pgm").shape(), (Shape{1, 1, 2}));
}
