#ifndef HPSYNC_H
#define HPSYNC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Bytes in the fixed frame header.
 */
#define HP_HEADER_LEN 26

/**
 * Length of a complete PoseFull frame.
 */
#define HP_POSE_FULL_FRAME_LEN 1680

/**
 * Length of a complete PoseIk frame.
 */
#define HP_POSE_IK_FRAME_LEN 280

/**
 * Number of joints in an IK pose.
 */
#define HP_IK_JOINTS 9

typedef enum HpOutputKind {
  HP_OUTPUT_KIND_SEND = 0,
  /**
   * Flush earlier sends to `conn`, then drop it.
   */
  HP_OUTPUT_KIND_CLOSE = 1,
} HpOutputKind;

typedef enum HpStatus {
  HP_STATUS_OK = 0,
  HP_STATUS_NULL_POINTER = 1,
  HP_STATUS_INVALID_ARGUMENT = 2,
  HP_STATUS_BUFFER_TOO_SMALL = 3,
  /**
   * Malformed or invalid frame.
   */
  HP_STATUS_PROTOCOL = 4,
  /**
   * The client session refused the operation or the incoming frame.
   */
  HP_STATUS_CLIENT = 5,
  HP_STATUS_KINEMATICS = 6,
  /**
   * Nothing queued; returned by `hp_room_next_output` when drained.
   */
  HP_STATUS_EMPTY = 7,
  /**
   * A Rust panic was caught at the boundary. The handle should be freed.
   */
  HP_STATUS_INTERNAL = 99,
} HpStatus;

typedef struct HpClient HpClient;

/**
 * Upper-body IK solver on the canonical 59-joint skeleton.
 */
typedef struct HpIkSolver HpIkSolver;

/**
 * One relay room. Outputs produced by the room are queued and drained with
 * `hp_room_next_output`.
 */
typedef struct HpRoom HpRoom;

typedef struct HpFrameHeader {
  uint8_t msg_type;
  uint32_t room_id;
  uint32_t sender_id;
  uint32_t seq;
  uint64_t timestamp_ms;
  uint16_t payload_len;
} HpFrameHeader;

/**
 * `data` stays valid until the next call on the same room.
 */
typedef struct HpOutput {
  enum HpOutputKind kind;
  uint64_t conn;
  const uint8_t *data;
  size_t len;
} HpOutput;

typedef struct HpRoomState {
  uint16_t slide_index;
  uint8_t phase;
  uint32_t participants;
} HpRoomState;

typedef struct HpViewState {
  bool joined;
  uint32_t self_id;
  uint16_t slide_index;
  uint8_t phase;
  uint32_t participants;
  /**
   * Set once the server excluded this client from the current phase.
   */
  bool excluded;
} HpViewState;

typedef struct HpJoint {
  float position[3];
  /**
   * x, y, z, w
   */
  float rotation[4];
} HpJoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message on this thread, NUL-terminated and truncated
 * to `cap`. Returns the full message length excluding the terminator.
 *
 * # Safety
 * `buf` must be valid for `cap` bytes or null with `cap == 0`.
 */
size_t hp_last_error(char *buf, size_t cap);

/**
 * Total length of the frame starting at `bytes`, or 0 in `*out_len` when more
 * bytes are needed to tell.
 *
 * # Safety
 * `bytes` must be valid for `len` bytes; `out_len` must be writable.
 */
enum HpStatus hp_frame_len(const uint8_t *bytes, size_t len, size_t *out_len);

/**
 * Parses the header only.
 *
 * # Safety
 * `bytes` must be valid for `len` bytes; `out` must be writable.
 */
enum HpStatus hp_decode_header(const uint8_t *bytes, size_t len, struct HpFrameHeader *out);

/**
 * Fully decodes and validates one frame, discarding the result.
 *
 * # Safety
 * `bytes` must be valid for `len` bytes.
 */
enum HpStatus hp_validate_frame(const uint8_t *bytes, size_t len);

/**
 * # Safety
 * `out` must be writable. The handle must be released with `hp_room_free`.
 */
enum HpStatus hp_room_new(uint32_t room_id, uint16_t deck_size, struct HpRoom **out);

/**
 * # Safety
 * `room` must come from `hp_room_new` and not be used afterwards. Null is ignored.
 */
void hp_room_free(struct HpRoom *room);

/**
 * Feeds one frame received on `conn`. Rejections are queued as outputs, not
 * reported as errors.
 *
 * # Safety
 * `room` must be a live handle; `bytes` valid for `len` bytes.
 */
enum HpStatus hp_room_handle(struct HpRoom *room,
                             uint64_t conn,
                             const uint8_t *bytes,
                             size_t len,
                             uint64_t now_ms);

/**
 * # Safety
 * `room` must be a live handle.
 */
enum HpStatus hp_room_disconnect(struct HpRoom *room, uint64_t conn, uint64_t now_ms);

/**
 * Expires silent participants. Call a few times per second.
 *
 * # Safety
 * `room` must be a live handle.
 */
enum HpStatus hp_room_tick(struct HpRoom *room, uint64_t now_ms);

/**
 * Pops the next queued output, or returns `HP_STATUS_EMPTY`.
 *
 * # Safety
 * `room` must be a live handle; `out` writable.
 */
enum HpStatus hp_room_next_output(struct HpRoom *room, struct HpOutput *out);

/**
 * # Safety
 * `room` must be a live handle; `out` writable.
 */
enum HpStatus hp_room_state(struct HpRoom *room, struct HpRoomState *out);

/**
 * # Safety
 * `out` must be writable. The handle must be released with `hp_client_free`.
 */
enum HpStatus hp_client_new(uint32_t room_id, struct HpClient **out);

/**
 * # Safety
 * `client` must come from `hp_client_new` and not be used afterwards. Null is ignored.
 */
void hp_client_free(struct HpClient *client);

/**
 * Builds a JoinRequest frame.
 *
 * # Safety
 * `client` must be a live handle; strings NUL-terminated; `out` valid for `cap` bytes.
 */
enum HpStatus hp_client_join(struct HpClient *client,
                             uint8_t role_code,
                             const char *display_name,
                             const char *avatar_ref,
                             uint64_t now_ms,
                             uint8_t *out,
                             size_t cap,
                             size_t *written);

/**
 * # Safety
 * `client` must be a live handle; `out` valid for `cap` bytes.
 */
enum HpStatus hp_client_heartbeat(struct HpClient *client,
                                  uint64_t now_ms,
                                  uint8_t *out,
                                  size_t cap,
                                  size_t *written);

/**
 * # Safety
 * `client` must be a live handle; `out` valid for `cap` bytes.
 */
enum HpStatus hp_client_slide(struct HpClient *client,
                              uint16_t slide_index,
                              uint64_t now_ms,
                              uint8_t *out,
                              size_t cap,
                              size_t *written);

/**
 * # Safety
 * `client` must be a live handle; `out` valid for `cap` bytes.
 */
enum HpStatus hp_client_mute(struct HpClient *client,
                             uint32_t target_id,
                             bool muted,
                             uint64_t now_ms,
                             uint8_t *out,
                             size_t cap,
                             size_t *written);

/**
 * # Safety
 * `client` must be a live handle; `out` valid for `cap` bytes.
 */
enum HpStatus hp_client_phase(struct HpClient *client,
                              uint8_t phase_code,
                              uint64_t now_ms,
                              uint8_t *out,
                              size_t cap,
                              size_t *written);

/**
 * Builds a TransformSimple frame from a browser participant's avatar state.
 *
 * # Safety
 * `client` must be a live handle; `out` valid for `cap` bytes.
 */
enum HpStatus hp_client_transform(struct HpClient *client,
                                  float x,
                                  float y,
                                  float z,
                                  float yaw,
                                  bool walking,
                                  float intensity,
                                  uint64_t now_ms,
                                  uint8_t *out,
                                  size_t cap,
                                  size_t *written);

/**
 * Applies one frame from the server. `*msg_type` receives its type code.
 *
 * # Safety
 * `client` must be a live handle; `bytes` valid for `len` bytes; `msg_type` writable or null.
 */
enum HpStatus hp_client_receive(struct HpClient *client,
                                const uint8_t *bytes,
                                size_t len,
                                uint8_t *msg_type);

/**
 * # Safety
 * `client` must be a live handle; `out` writable.
 */
enum HpStatus hp_client_view(struct HpClient *client, struct HpViewState *out);

/**
 * Interpolated root of a remote participant at local time `now_ms`, after the
 * configured interpolation delay.
 *
 * # Safety
 * `client` must be a live handle; `out` writable.
 */
enum HpStatus hp_client_sample_root(struct HpClient *client,
                                    uint32_t participant_id,
                                    uint64_t now_ms,
                                    struct HpJoint *out);

/**
 * # Safety
 * `out` must be writable. The handle must be released with `hp_ik_free`.
 */
enum HpStatus hp_ik_new(struct HpIkSolver **out);

/**
 * # Safety
 * `solver` must come from `hp_ik_new` and not be used afterwards. Null is ignored.
 */
void hp_ik_free(struct HpIkSolver *solver);

/**
 * Solves a single frame from head and hand targets. `out` receives the IK
 * joints in wire order: hips, spine, head, left upper arm, forearm, hand,
 * right upper arm, forearm, hand.
 *
 * # Safety
 * `solver` must be a live handle; `out` valid for `HP_IK_JOINTS` joints.
 */
enum HpStatus hp_ik_solve(struct HpIkSolver *solver,
                          struct HpJoint head,
                          struct HpJoint left_hand,
                          struct HpJoint right_hand,
                          struct HpJoint *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HPSYNC_H */
