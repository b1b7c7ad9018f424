/* Feeds a red square moving right over a gray background and prints the
 * tracks seen on the last frame. Exits non-zero when nothing is tracked. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "cntrack.h"

#define W 160
#define H 120
#define N 40

static void render(uint8_t *px, int t) {
    memset(px, 128, W * H * 3);
    int x0 = 20 + 2 * t, y0 = 40;
    for (int y = y0; y < y0 + 30; y++)
        for (int x = x0; x < x0 + 30 && x < W; x++) {
            uint8_t *p = px + 3 * (y * W + x);
            p[0] = 220; p[1] = 30; p[2] = 30;
        }
}

int main(void) {
    CntTracker *t = NULL;
    if (cnt_tracker_new("{\"init_frames\": 5}", &t) != CNT_STATUS_OK) {
        fprintf(stderr, "new: %s\n", cnt_last_error());
        return 1;
    }
    static uint8_t px[W * H * 3];
    for (int i = 0; i < N; i++) {
        render(px, i);
        if (cnt_tracker_push_frame(t, px, sizeof px, W, H) != CNT_STATUS_OK) {
            fprintf(stderr, "push %d: %s\n", i, cnt_last_error());
            cnt_tracker_free(t);
            return 1;
        }
    }
    size_t n = 0;
    cnt_tracker_track_count(t, &n);
    for (size_t i = 0; i < n; i++) {
        CntTrackRecord r;
        cnt_tracker_get_track(t, i, &r);
        printf("id=%llu box=%.1f,%.1f,%.1f,%.1f conf=%.3f mode=%d\n",
               (unsigned long long)r.id, r.x, r.y, r.w, r.h, r.confidence, (int)r.mode);
    }
    printf("cntrack %s\n", cnt_version());
    cnt_tracker_free(t);
    return n > 0 ? 0 : 1;
}
