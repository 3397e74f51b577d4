import javax.crypto.spec.SecretKeySpec;

public class SessionCrypto {
    public static SecretKeySpec sessionKey() {
        return new SecretKeySpec("0123456789abcdef".getBytes(), "AES");
    }
}
